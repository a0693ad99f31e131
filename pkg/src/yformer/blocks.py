"""Input embedding and the contracting / expanding attention blocks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .attention import AttentionConfig, AttentionLayer
from .numerics import (
    Conv1d,
    ConvSpec,
    ConvTranspose1d,
    LayerNorm,
    Linear,
    Module,
    ShapeError,
    Tensor,
    add,
    as_tensor,
    elu,
    maxpool1d,
)


def positional_encoding(length: int, d_model: int) -> np.ndarray:
    """Fixed sinusoidal table; even channels sin, odd channels cos."""
    pe = np.zeros((length, d_model))
    position = np.arange(length)[:, None]
    div = np.exp(np.arange(0, d_model, 2) * -(math.log(10000.0) / d_model))
    pe[:, 0::2] = np.sin(position * div)
    pe[:, 1::2] = np.cos(position * div)[:, : d_model // 2]
    return pe


@dataclass(frozen=True)
class EmbeddingConfig:
    in_channels: int
    d_model: int
    time_feature_count: int = 4
    value_kernel: int = 3
    max_len: int = 5000


class DataEmbedding(Module):
    """Value conv-projection + sinusoidal position + linear calendar-feature projection.

    With zero input channels (a future encoder fed only calendar features) the
    value projection is dropped.
    """

    def __init__(self, cfg: EmbeddingConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.value = None
        if cfg.in_channels > 0:
            spec = ConvSpec(cfg.value_kernel, 1, cfg.value_kernel // 2, cfg.in_channels, cfg.d_model)
            self.value = Conv1d(spec, rng, bias=False)
        self.temporal = Linear(cfg.time_feature_count, cfg.d_model, rng, bias=False)
        self._pe = positional_encoding(cfg.max_len, cfg.d_model)

    def forward(self, series, marks) -> Tensor:
        marks = as_tensor(marks)
        n, length = marks.shape[:2]
        if length > self.cfg.max_len:
            raise ShapeError(f"length {length} exceeds positional table of {self.cfg.max_len}")
        out = add(self.temporal(marks), self._pe[None, :length])
        if self.value is not None:
            series = as_tensor(series)
            if series.shape[:2] != (n, length):
                raise ShapeError(f"series {series.shape} and time features {marks.shape} are misaligned")
            out = add(self.value(series), out)
        return out


@dataclass(frozen=True)
class BlockStackConfig:
    d_model: int
    n_heads: int = 1
    I: int = 2
    factor: float = 5.0
    seed: int = 0
    distil_conv: ConvSpec = field(default=ConvSpec(3, 1, 1))
    pool: ConvSpec = field(default=ConvSpec(3, 2, 1))
    upsample: ConvSpec = field(default=ConvSpec(2, 2, 0))

    def conv_spec(self, base: ConvSpec) -> ConvSpec:
        return ConvSpec(base.kernel_size, base.stride, base.padding, self.d_model, self.d_model)

    def attention(self, seed_offset: int) -> AttentionConfig:
        return AttentionConfig(self.d_model, self.n_heads, self.factor, self.seed + seed_offset)

    def contracted_length(self, length: int) -> int:
        return self.pool.out_length(length)

    def expanded_length(self, length: int) -> int:
        return self.upsample.transposed_length(length)


class ContractingProbSparseBlock(Module):
    """Attention (with residual) -> Conv1d -> LayerNorm -> Conv1d -> ELU -> MaxPool."""

    masked = False

    def __init__(self, cfg: BlockStackConfig, rng: np.random.Generator, seed_offset: int = 0):
        self.cfg = cfg
        kind = "canonical" if self.masked else "probsparse"
        self.attention = AttentionLayer(cfg.attention(seed_offset), rng, kind=kind, causal=self.masked)
        self.conv1 = Conv1d(cfg.conv_spec(cfg.distil_conv), rng)
        self.norm = LayerNorm(cfg.d_model)
        self.conv2 = Conv1d(cfg.conv_spec(cfg.distil_conv), rng)

    def forward(self, h, rng: np.random.Generator | None = None) -> Tensor:
        h = as_tensor(h)
        if h.shape[1] < 2:
            raise ShapeError(f"contracting block needs length >= 2, got {h.shape[1]}")
        out = add(h, self.attention(h, h, h, rng=rng))
        out = self.norm(self.conv1(out))
        pool = self.cfg.pool
        return maxpool1d(elu(self.conv2(out)), pool.kernel_size, pool.stride, pool.padding)


class ContractingMaskedBlock(ContractingProbSparseBlock):
    """Same pipeline with causally masked canonical attention in the first slot."""

    masked = True


class ExpandingCrossBlock(Module):
    """Cross-attention (with residual) -> Conv1d -> LayerNorm -> ConvTranspose1d -> ELU."""

    def __init__(self, cfg: BlockStackConfig, rng: np.random.Generator, seed_offset: int = 0):
        self.cfg = cfg
        self.attention = AttentionLayer(cfg.attention(seed_offset), rng, kind="probsparse")
        self.conv = Conv1d(cfg.conv_spec(cfg.distil_conv), rng)
        self.norm = LayerNorm(cfg.d_model)
        self.deconv = ConvTranspose1d(cfg.conv_spec(cfg.upsample), rng)

    def forward(self, d_prev, e_skip, rng: np.random.Generator | None = None) -> Tensor:
        d_prev, e_skip = as_tensor(d_prev), as_tensor(e_skip)
        if d_prev.shape[-1] != e_skip.shape[-1]:
            raise ShapeError(f"decoder channels {d_prev.shape[-1]} != encoder channels {e_skip.shape[-1]}")
        out = add(d_prev, self.attention(d_prev, e_skip, e_skip, rng=rng))
        out = self.norm(self.conv(out))
        return elu(self.deconv(out))
