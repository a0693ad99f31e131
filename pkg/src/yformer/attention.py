"""Canonical, masked and ProbSparse attention.

The functional core works on head-split tensors of shape (B, L, d) where B folds
batch and heads together. :class:`AttentionLayer` adds the learned Q/K/V/output
projections and the head split/merge around it.

ProbSparse keeps full attention only for the ``u`` queries whose score
distribution over a sampled key subset is furthest from uniform (max minus mean
of the scaled dot products). Every other query row falls back to the mean of V,
or the running mean of V up to its own position when a causal mask applies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import (
    Linear,
    Module,
    ShapeError,
    Tensor,
    add,
    as_tensor,
    cummean_time,
    matmul,
    mean,
    merge_heads,
    put_rows,
    softmax,
    split_heads,
    swapaxes,
    take_rows,
)


@dataclass(frozen=True)
class AttentionConfig:
    d_model: int
    n_heads: int = 1
    factor: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.factor <= 0:
            raise ValueError("sampling factor must be positive")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    def n_top(self, length_q: int) -> int:
        return _log_count(self.factor, length_q)

    def n_sample(self, length_k: int) -> int:
        return _log_count(self.factor, length_k)


def _log_count(factor: float, length: int) -> int:
    if length < 1:
        raise ShapeError("attention needs at least one position")
    return min(length, max(1, math.ceil(factor * math.log(length))))


class CausalMask:
    """Key position j is visible to query position i iff j <= i."""

    def allowed(self, i: int, j: int) -> bool:
        return j <= i

    def matrix(self, length_q: int, length_k: int | None = None) -> np.ndarray:
        length_k = length_q if length_k is None else length_k
        return np.tril(np.ones((length_q, length_k), dtype=bool))


def _check_qkv(q: Tensor, k: Tensor, v: Tensor) -> None:
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"query width {q.shape[-1]} != key width {k.shape[-1]}")
    if k.shape[:2] != v.shape[:2]:
        raise ShapeError(f"keys {k.shape} and values {v.shape} disagree on batch/length")
    if q.shape[0] != k.shape[0]:
        raise ShapeError(f"query batch {q.shape[0]} != key batch {k.shape[0]}")


def attention_weights(q, k, mask: CausalMask | np.ndarray | None = None) -> Tensor:
    q, k = as_tensor(q), as_tensor(k)
    scores = matmul(q, swapaxes(k)) * (1.0 / math.sqrt(q.shape[-1]))
    allowed = mask.matrix(q.shape[1], k.shape[1]) if isinstance(mask, CausalMask) else mask
    return softmax(scores, axis=-1, mask=allowed)


def canonical_attention(q, k, v, mask: CausalMask | None = None, return_weights: bool = False):
    """softmax(Q K^T / sqrt(d)) V on head-split tensors."""
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    _check_qkv(q, k, v)
    weights = attention_weights(q, k, mask)
    out = matmul(weights, v)
    return (out, weights.data) if return_weights else out


def sample_keys(length_k: int, n_sample: int, rng: np.random.Generator) -> np.ndarray:
    """Sorted key indices drawn without replacement; the full range when n_sample == length_k."""
    if n_sample >= length_k:
        return np.arange(length_k)
    return np.sort(rng.choice(length_k, size=n_sample, replace=False))


def sparsity_scores(q, k_sample) -> np.ndarray:
    """max_j(q_i.k_j / sqrt(d)) - mean_j(q_i.k_j / sqrt(d)) over the sampled keys; (B, L_Q)."""
    q = q.data if isinstance(q, Tensor) else np.asarray(q)
    ks = k_sample.data if isinstance(k_sample, Tensor) else np.asarray(k_sample)
    qk = np.einsum("bld,bsd->bls", q, ks) / math.sqrt(q.shape[-1])
    return qk.max(axis=-1) - qk.mean(axis=-1)


def select_queries(scores: np.ndarray, n_top: int) -> np.ndarray:
    """Indices of the n_top highest scores per row, ties to the lower index, returned sorted."""
    order = np.argsort(-scores, axis=-1, kind="stable")[:, :n_top]
    return np.sort(order, axis=-1)


def _fallback(v: Tensor, length_q: int, causal: bool) -> Tensor:
    if causal:
        if v.shape[1] != length_q:
            raise ShapeError("masked fallback needs equal query and value lengths")
        return cummean_time(v)
    zeros = np.zeros((v.shape[0], length_q, v.shape[2]), dtype=v.data.dtype)
    return add(mean(v, axis=1, keepdims=True), zeros)


def probsparse_attention(
    q,
    k,
    v,
    factor: float = 5.0,
    rng: np.random.Generator | None = None,
    mask: CausalMask | None = None,
    return_selection: bool = False,
):
    """Attention restricted to the dominant queries; the rest get the mean-of-V fallback."""
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    _check_qkv(q, k, v)
    rng = np.random.default_rng(0) if rng is None else rng
    batch, length_q, _ = q.shape
    length_k = k.shape[1]
    n_top = _log_count(factor, length_q)
    n_sample = _log_count(factor, length_k)

    key_index = sample_keys(length_k, n_sample, rng)
    scores = sparsity_scores(q, k.data[:, key_index])
    selected = select_queries(scores, n_top)

    q_top = take_rows(q, selected)
    allowed = None
    if mask is not None:
        allowed = mask.matrix(length_q, length_k)[selected]
    weights = softmax(matmul(q_top, swapaxes(k)) * (1.0 / math.sqrt(q.shape[-1])), mask=allowed)
    context = put_rows(_fallback(v, length_q, mask is not None), selected, matmul(weights, v))
    if return_selection:
        return context, selected, weights.data
    return context


def probsparse_cross_attention(q, k, v, factor: float = 5.0, rng: np.random.Generator | None = None):
    """Decoder queries against encoder keys/values; no mask, lengths may differ."""
    return probsparse_attention(q, k, v, factor=factor, rng=rng, mask=None)


class AttentionLayer(Module):
    """Multi-head attention with learned projections.

    ``kind`` is "canonical" or "probsparse". When ``keep_weights`` is set the last
    realized (B*H, L_Q, L_K) weight matrix is kept in ``last_weights``; for
    ProbSparse the fallback rows are left as zeros there.
    """

    def __init__(
        self,
        cfg: AttentionConfig,
        rng: np.random.Generator,
        kind: str = "canonical",
        causal: bool = False,
    ):
        if kind not in ("canonical", "probsparse"):
            raise ValueError(f"unknown attention kind {kind!r}")
        self.cfg = cfg
        self.kind = kind
        self.causal = causal
        self.query = Linear(cfg.d_model, cfg.d_model, rng)
        self.key = Linear(cfg.d_model, cfg.d_model, rng)
        self.value = Linear(cfg.d_model, cfg.d_model, rng)
        self.out = Linear(cfg.d_model, cfg.d_model, rng)
        self.keep_weights = False
        self.last_weights: np.ndarray | None = None

    def forward(self, queries, keys, values, rng: np.random.Generator | None = None) -> Tensor:
        queries, keys, values = as_tensor(queries), as_tensor(keys), as_tensor(values)
        width = self.cfg.d_model
        for t in (queries, keys, values):
            if t.shape[-1] != width:
                raise ShapeError(f"attention expects {width} channels, got {t.shape}")
        h = self.cfg.n_heads
        q = split_heads(self.query(queries), h)
        k = split_heads(self.key(keys), h)
        v = split_heads(self.value(values), h)
        mask = CausalMask() if self.causal else None
        if self.kind == "canonical":
            ctx, w = canonical_attention(q, k, v, mask=mask, return_weights=True)
        else:
            rng = np.random.default_rng(self.cfg.seed) if rng is None else rng
            ctx, selected, w_top = probsparse_attention(
                q, k, v, factor=self.cfg.factor, rng=rng, mask=mask, return_selection=True
            )
            if self.keep_weights:
                w = np.zeros((q.shape[0], q.shape[1], k.shape[1]))
                w[np.arange(q.shape[0])[:, None], selected] = w_top
        if self.keep_weights:
            self.last_weights = w
        return self.out(merge_heads(ctx, h))
