"""The Y-shaped encoder/decoder: two contracting encoders, a concatenated
embedding pyramid, an expanding decoder with skip connections and a dual
reconstruction/forecast head."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from .attention import AttentionConfig, AttentionLayer
from .blocks import (
    BlockStackConfig,
    ContractingMaskedBlock,
    ContractingProbSparseBlock,
    DataEmbedding,
    EmbeddingConfig,
    ExpandingCrossBlock,
)
from .numerics import Linear, Module, ShapeError, Tensor, as_tensor, concat_time, mean, slice_time, square, sub


@dataclass(frozen=True)
class ModelConfig:
    T: int
    tau: int
    M: int = 0
    O: int = 1
    M_future: int | None = None
    time_features: int = 4
    d_model: int = 512
    n_heads: int = 8
    I: int = 2
    c: float = 5.0
    alpha: float = 0.7
    disable_skips: bool = False
    alpha_zero: bool = False
    seed: int = 0

    def __post_init__(self):
        block = 2**self.I
        if self.I < 1:
            raise ValueError("need at least one encoder block")
        if self.T % block or self.tau % block:
            raise ValueError(f"T={self.T} and tau={self.tau} must be divisible by 2**I={block}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha={self.alpha} outside [0, 1]")
        if self.O < 1 or self.M < 0:
            raise ValueError("need O >= 1 target channels and M >= 0 predictors")
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")

    @property
    def future_channels(self) -> int:
        return self.M if self.M_future is None else self.M_future

    @property
    def effective_alpha(self) -> float:
        return 0.0 if self.alpha_zero else self.alpha

    def blocks(self) -> BlockStackConfig:
        return BlockStackConfig(self.d_model, self.n_heads, self.I, self.c, self.seed)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    def with_(self, **changes) -> "ModelConfig":
        return replace(self, **changes)


@dataclass
class ForecastOutput:
    y_hat_past: Tensor
    y_hat_fut: Tensor


@dataclass
class EmbeddingPyramid:
    """Entries e_0..e_I; entry i is past (length T/2^i) followed by future (tau/2^i)."""

    entries: list[Tensor]
    past_lengths: list[int]

    def lengths(self) -> list[int]:
        return [e.shape[1] for e in self.entries]


class Yformer(Module):
    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        blocks = cfg.blocks()
        self.past_embedding = DataEmbedding(
            EmbeddingConfig(cfg.M + cfg.O, cfg.d_model, cfg.time_features), rng
        )
        self.future_embedding = DataEmbedding(
            EmbeddingConfig(cfg.future_channels, cfg.d_model, cfg.time_features), rng
        )
        # distinct seed offsets give every ProbSparse layer its own key sample
        self.past_blocks = [ContractingProbSparseBlock(blocks, rng, seed_offset=i) for i in range(cfg.I)]
        self.future_blocks = [ContractingMaskedBlock(blocks, rng, seed_offset=100 + i) for i in range(cfg.I)]
        self.decoder_attention = AttentionLayer(
            AttentionConfig(cfg.d_model, cfg.n_heads, cfg.c, cfg.seed), rng, kind="canonical"
        )
        self.decoder_blocks = [ExpandingCrossBlock(blocks, rng, seed_offset=200 + i) for i in range(cfg.I)]
        self.head = Linear(cfg.d_model, cfg.O, rng)

    def _check_inputs(self, x, y, x_future, marks_past, marks_future):
        cfg = self.cfg
        n = y.shape[0]
        expected = {
            "x": (x, (n, cfg.T, cfg.M)),
            "y": (y, (n, cfg.T, cfg.O)),
            "x_future": (x_future, (n, cfg.tau, cfg.future_channels)),
            "marks_past": (marks_past, (n, cfg.T, cfg.time_features)),
            "marks_future": (marks_future, (n, cfg.tau, cfg.time_features)),
        }
        for name, (arr, shape) in expected.items():
            if tuple(np.shape(arr)) != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {tuple(np.shape(arr))}")

    def encode(self, x, y, x_future, marks_past, marks_future) -> EmbeddingPyramid:
        self._check_inputs(x, y, x_future, marks_past, marks_future)
        past_in = np.concatenate([np.asarray(x), np.asarray(y)], axis=-1)
        e_past = self.past_embedding(past_in, marks_past)
        e_fut = self.future_embedding(x_future, marks_future)
        entries = [concat_time(e_past, e_fut)]
        past_lengths = [e_past.shape[1]]
        for past_block, future_block in zip(self.past_blocks, self.future_blocks):
            e_past = past_block(e_past)
            e_fut = future_block(e_fut)
            entries.append(concat_time(e_past, e_fut))
            past_lengths.append(e_past.shape[1])
        return EmbeddingPyramid(entries, past_lengths)

    def decode(self, pyramid: EmbeddingPyramid) -> Tensor:
        top = pyramid.entries[-1]
        d = self.decoder_attention(top, top, top)
        n_levels = len(self.decoder_blocks)
        for i, block in enumerate(self.decoder_blocks, start=1):
            skip = top if self.cfg.disable_skips else pyramid.entries[n_levels - i]
            d = block(d, skip)
        return d

    def forward(self, x, y, x_future, marks_past, marks_future) -> ForecastOutput:
        """Future targets are not an argument, so they cannot reach the forecast."""
        d_final = self.decode(self.encode(x, y, x_future, marks_past, marks_future))
        out = self.head(d_final)
        T = self.cfg.T
        return ForecastOutput(slice_time(out, 0, T), slice_time(out, T, T + self.cfg.tau))

    def forward_batch(self, batch) -> ForecastOutput:
        return self.forward(batch.x, batch.y, batch.x_future, batch.marks_past, batch.marks_future)

    def set_keep_weights(self, flag: bool = True) -> None:
        for block in self.past_blocks + self.future_blocks + self.decoder_blocks:
            block.attention.keep_weights = flag
        self.decoder_attention.keep_weights = flag


def mse_loss(pred, target) -> Tensor:
    """Mean over time of per-step channel-mean squared error, averaged over the batch."""
    pred = as_tensor(pred)
    if pred.shape != np.shape(target):
        raise ShapeError(f"prediction {pred.shape} vs target {np.shape(target)}")
    return mean(square(sub(pred, target)))


def loss(output: ForecastOutput, y, y_prime, alpha: float) -> Tensor:
    """alpha * reconstruction MSE + (1 - alpha) * forecast MSE."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha={alpha} outside [0, 1]")
    if alpha == 0.0:
        return mse_loss(output.y_hat_fut, y_prime)
    if alpha == 1.0:
        return mse_loss(output.y_hat_past, y)
    return mse_loss(output.y_hat_past, y) * alpha + mse_loss(output.y_hat_fut, y_prime) * (1.0 - alpha)


def metrics(y_prime, y_hat) -> tuple[float, float]:
    """(MSE, MAE): mean over steps of the per-step channel-mean error."""
    y_prime = np.asarray(y_prime, dtype=float)
    y_hat = np.asarray(y_hat.data if isinstance(y_hat, Tensor) else y_hat, dtype=float)
    if y_prime.shape != y_hat.shape:
        raise ShapeError(f"metrics: {y_prime.shape} vs {y_hat.shape}")
    diff = y_prime - y_hat
    return float(np.mean(diff * diff)), float(np.mean(np.abs(diff)))


def parameter_count(cfg: ModelConfig) -> int:
    return Yformer(cfg).num_parameters()
