"""Central finite-difference checks of the hand-written backward passes.

Every case builds a scalar probe ``sum(f(inputs) * R)`` with a fixed random R,
so the whole Jacobian is exercised, and compares analytic gradients of every
input and parameter against ``(L(x + h) - L(x - h)) / 2h``.

Relative error per tensor is ``max|a - n| / max(max|a|, max|n|, floor)``: the
worst elementwise deviation scaled by the tensor's gradient magnitude. A purely
elementwise ratio is dominated by round-off on entries that are ~0. The floor is
``FLOOR_RATIO`` times the largest gradient entry of the whole case, so a tensor
whose exact gradient is zero (a key bias under softmax, say) is judged against
the case's scale instead of against round-off.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import numerics as nx
from .attention import AttentionConfig, AttentionLayer, CausalMask, canonical_attention, probsparse_attention
from .blocks import (
    BlockStackConfig,
    ContractingMaskedBlock,
    ContractingProbSparseBlock,
    DataEmbedding,
    EmbeddingConfig,
    ExpandingCrossBlock,
)
from .model import ModelConfig, Yformer, loss
from .numerics import Tensor

STEP = 1e-6
TOLERANCE = 1e-4
FLOOR_RATIO = 1e-3


@dataclass
class CheckResult:
    name: str
    instances: int
    max_rel_error: float
    seconds: float
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures and self.max_rel_error < TOLERANCE


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-12) -> float:
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def check_gradients(
    fn: Callable[[], Tensor],
    leaves: list[Tensor],
    rng: np.random.Generator,
    step: float = STEP,
    max_coords: int | None = None,
) -> float:
    """Worst relative error over ``leaves`` for the probe ``sum(fn() * R)``.

    ``fn`` must read the leaves' current ``.data`` and be deterministic.
    With ``max_coords`` only that many random coordinates per leaf are perturbed.
    """
    out = fn()
    probe = rng.standard_normal(out.shape)

    def objective() -> float:
        return float(np.sum(fn().data * probe))

    for leaf in leaves:
        leaf.grad = None
    nx.tsum(nx.mul(fn(), probe)).backward()
    analytic = [leaf.grad.copy() for leaf in leaves]

    pairs = []
    for leaf, grad in zip(leaves, analytic):
        flat = leaf.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, max_coords, replace=False))
        numeric = np.empty(coords.size)
        for j, idx in enumerate(coords):
            orig = flat[idx]
            flat[idx] = orig + step
            up = objective()
            flat[idx] = orig - step
            down = objective()
            flat[idx] = orig
            numeric[j] = (up - down) / (2 * step)
        pairs.append((grad.reshape(-1)[coords], numeric))
        leaf.grad = None
    overall = max(max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0)) for a, n in pairs)
    floor = max(FLOOR_RATIO * overall, 1e-12)
    return max(relative_error(a, n, floor) for a, n in pairs)


def _leaf(rng, shape, scale=1.0):
    return Tensor(scale * rng.standard_normal(shape), requires_grad=True)


# A case maps an rng to (fn, leaves, max_coords).
Case = Callable[[np.random.Generator], tuple]


def _unary(op):
    def case(rng):
        x = _leaf(rng, (2, 5, 3))
        return lambda: op(x), [x], None

    return case


def _binary(op, shape_b=(2, 5, 3)):
    def case(rng):
        a, b = _leaf(rng, (2, 5, 3)), _leaf(rng, shape_b)
        return lambda: op(a, b), [a, b], None

    return case


def _take_rows(rng):
    x = _leaf(rng, (3, 7, 2))
    index = np.sort(np.stack([rng.choice(7, 3, replace=False) for _ in range(3)]), axis=1)
    return lambda: nx.take_rows(x, index), [x], None


def _put_rows(rng):
    base, rows = _leaf(rng, (3, 7, 2)), _leaf(rng, (3, 3, 2))
    index = np.sort(np.stack([rng.choice(7, 3, replace=False) for _ in range(3)]), axis=1)
    return lambda: nx.put_rows(base, index, rows), [base, rows], None


def _softmax(masked):
    def case(rng):
        x = _leaf(rng, (2, 5, 5))
        mask = np.tril(np.ones((5, 5), dtype=bool)) if masked else None
        return lambda: nx.softmax(x, mask=mask), [x], None

    return case


def _linear(rng):
    x, w, b = _leaf(rng, (2, 5, 3)), _leaf(rng, (3, 4)), _leaf(rng, (4,))
    return lambda: nx.linear(x, w, b), [x, w, b], None


def _conv(rng):
    stride = int(rng.integers(1, 3))
    kernel = int(rng.integers(1, 4))
    padding = int(rng.integers(0, kernel))
    x, w, b = _leaf(rng, (2, 9, 3)), _leaf(rng, (4, 3, kernel)), _leaf(rng, (4,))
    return lambda: nx.conv1d(x, w, b, stride, padding), [x, w, b], None


def _deconv(rng):
    stride = int(rng.integers(1, 3))
    kernel = int(rng.integers(1, 4))
    padding = int(rng.integers(0, kernel))
    x, w, b = _leaf(rng, (2, 6, 3)), _leaf(rng, (3, 4, kernel)), _leaf(rng, (4,))
    return lambda: nx.conv_transpose1d(x, w, b, stride, padding), [x, w, b], None


def _maxpool(rng):
    kernel = int(rng.integers(2, 4))
    stride = int(rng.integers(1, 3))
    padding = int(rng.integers(0, kernel // 2 + 1))
    x = _leaf(rng, (2, 9, 3))
    return lambda: nx.maxpool1d(x, kernel, stride, padding), [x], None


def _layer_norm(rng):
    x, g, b = _leaf(rng, (2, 5, 4)), _leaf(rng, (4,)), _leaf(rng, (4,))
    return lambda: nx.layer_norm(x, g, b), [x, g, b], None


NUMERIC_CASES: dict[str, Case] = {
    "add": _binary(nx.add),
    "add_broadcast": _binary(nx.add, (3,)),
    "sub": _binary(nx.sub),
    "mul": _binary(nx.mul),
    "mul_broadcast": _binary(nx.mul, (1, 5, 1)),
    "square": _unary(nx.square),
    "elu": _unary(nx.elu),
    "sum": _unary(lambda x: nx.tsum(x, axis=1)),
    "mean": _unary(lambda x: nx.mean(x, axis=-1, keepdims=True)),
    "swapaxes": _unary(nx.swapaxes),
    "reshape": _unary(lambda x: nx.reshape(x, (2, 15, 1))),
    "split_heads": _unary(lambda x: nx.split_heads(nx.reshape(x, (2, 3, 5)), 5)),
    "merge_heads": _unary(lambda x: nx.merge_heads(x, 2)),
    "concat_time": _binary(nx.concat_time, (2, 4, 3)),
    "slice_time": _unary(lambda x: nx.slice_time(x, 1, 4)),
    "take_rows": _take_rows,
    "put_rows": _put_rows,
    "cummean_time": _unary(nx.cummean_time),
    "matmul": _binary(lambda a, b: nx.matmul(a, nx.swapaxes(b)), (2, 4, 3)),
    "linear": _linear,
    "softmax": _softmax(False),
    "softmax_masked": _softmax(True),
    "conv1d": _conv,
    "conv_transpose1d": _deconv,
    "maxpool1d": _maxpool,
    "layer_norm": _layer_norm,
}


def _canonical(masked):
    def case(rng):
        q, k, v = _leaf(rng, (2, 6, 4)), _leaf(rng, (2, 6, 4)), _leaf(rng, (2, 6, 4))
        mask = CausalMask() if masked else None
        return lambda: canonical_attention(q, k, v, mask=mask), [q, k, v], None

    return case


def _probsparse(masked):
    def case(rng):
        seed = int(rng.integers(1 << 31))
        q, k, v = _leaf(rng, (2, 8, 4)), _leaf(rng, (2, 8, 4)), _leaf(rng, (2, 8, 4))
        mask = CausalMask() if masked else None

        def fn():
            return probsparse_attention(q, k, v, factor=1.0, rng=np.random.default_rng(seed), mask=mask)

        return fn, [q, k, v], None

    return case


def _attention_layer(kind, causal):
    def case(rng):
        cfg = AttentionConfig(4, n_heads=2, factor=1.0, seed=int(rng.integers(1 << 31)))
        layer = AttentionLayer(cfg, rng, kind=kind, causal=causal)
        q, kv = _leaf(rng, (2, 8, 4)), _leaf(rng, (2, 8, 4))
        return lambda: layer(q, kv, kv), [q, kv, *layer.parameters()], 8

    return case


def _stack_cfg(rng):
    return BlockStackConfig(d_model=4, n_heads=2, I=2, factor=1.0, seed=int(rng.integers(1 << 31)))


def _contracting(block_cls):
    def case(rng):
        block = block_cls(_stack_cfg(rng), rng)
        h = _leaf(rng, (2, 8, 4))
        return lambda: block(h), [h, *block.parameters()], 8

    return case


def _expanding(rng):
    block = ExpandingCrossBlock(_stack_cfg(rng), rng)
    d, e = _leaf(rng, (2, 4, 4)), _leaf(rng, (2, 8, 4))
    return lambda: block(d, e), [d, e, *block.parameters()], 8


def _embedding(rng):
    emb = DataEmbedding(EmbeddingConfig(in_channels=2, d_model=4, time_feature_count=3), rng)
    series, marks = _leaf(rng, (2, 8, 2)), _leaf(rng, (2, 8, 3))
    return lambda: emb(series, marks), [series, marks, *emb.parameters()], 8


def _yformer(rng):
    cfg = ModelConfig(
        T=8, tau=8, M=1, O=1, time_features=2, d_model=4, n_heads=2, I=2, c=1.0, alpha=0.5,
        seed=int(rng.integers(1 << 31)),
    )
    model = Yformer(cfg)
    x, y, xf = (rng.standard_normal((2, 8, 1)) for _ in range(3))
    mp, mf = rng.uniform(-0.5, 0.5, (2, 8, 2)), rng.uniform(-0.5, 0.5, (2, 8, 2))

    def fn():
        out = model(x, y, xf, mp, mf)
        return nx.concat_time(out.y_hat_past, out.y_hat_fut)

    return fn, model.parameters(), 1


def _yformer_loss(rng):
    cfg = ModelConfig(T=8, tau=8, time_features=2, d_model=4, n_heads=1, I=2, c=1.0, alpha=0.7)
    model = Yformer(cfg)
    y = rng.standard_normal((2, 8, 1))
    yf = rng.standard_normal((2, 8, 1))
    mp, mf = rng.uniform(-0.5, 0.5, (2, 8, 2)), rng.uniform(-0.5, 0.5, (2, 8, 2))
    x = np.zeros((2, 8, 0))

    def fn():
        return nx.reshape(loss(model(x, y, np.zeros((2, 8, 0)), mp, mf), y, yf, cfg.alpha), (1, 1, 1))

    return fn, model.parameters(), 1


ATTENTION_CASES: dict[str, Case] = {
    "canonical_attention": _canonical(False),
    "canonical_attention_masked": _canonical(True),
    "probsparse_attention": _probsparse(False),
    "probsparse_attention_masked": _probsparse(True),
    "attention_layer_canonical": _attention_layer("canonical", False),
    "attention_layer_causal": _attention_layer("canonical", True),
    "attention_layer_probsparse": _attention_layer("probsparse", False),
}

BLOCK_CASES: dict[str, Case] = {
    "data_embedding": _embedding,
    "contracting_probsparse_block": _contracting(ContractingProbSparseBlock),
    "contracting_masked_block": _contracting(ContractingMaskedBlock),
    "expanding_cross_block": _expanding,
    "yformer": _yformer,
    "yformer_loss": _yformer_loss,
}

SUITES = {"numerics": NUMERIC_CASES, "attention": ATTENTION_CASES, "blocks": BLOCK_CASES}


def run_case(name: str, case: Case, instances: int = 20, seed: int = 0) -> CheckResult:
    start = time.perf_counter()
    worst = 0.0
    failures = []
    previous = nx.get_default_dtype()
    nx.set_default_dtype(np.float64)
    try:
        for i in range(instances):
            rng = np.random.default_rng([seed, i])
            fn, leaves, max_coords = case(rng)
            err = check_gradients(fn, list(leaves), rng, max_coords=max_coords)
            worst = max(worst, err)
            if not err < TOLERANCE:
                failures.append(f"instance {i}: relative error {err:.3e}")
    finally:
        nx.set_default_dtype(previous)
    return CheckResult(name, instances, worst, time.perf_counter() - start, failures)


def run_suites(names=None, instances: int = 20, seed: int = 0) -> list[CheckResult]:
    names = list(SUITES) if names is None else list(names)
    unknown = set(names) - set(SUITES)
    if unknown:
        raise KeyError(f"unknown gradcheck suites {sorted(unknown)}")
    return [run_case(n, c, instances, seed) for s in names for n, c in SUITES[s].items()]
