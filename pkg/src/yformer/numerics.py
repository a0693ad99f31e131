"""Reverse-mode automatic differentiation over dense numpy arrays.

Tensors are at most rank 3 and laid out as (batch, time, channel). Every
operator records a closure that maps the output gradient to gradients of its
inputs; :meth:`Tensor.backward` walks the graph in reverse topological order.

Gradients are *not* accumulated across backward passes: calling ``backward``
while a leaf still holds a gradient raises, so a missing ``zero_grad`` shows up
as an error instead of a silently doubled update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_DTYPE = np.float64


class NonFiniteError(ValueError):
    """An op that requires finite input received inf or nan."""


class ShapeError(ValueError):
    """Raised when operand extents are incompatible."""


def set_default_dtype(dtype) -> None:
    global _DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}; use float32 or float64")
    _DTYPE = dtype.type


def get_default_dtype():
    return _DTYPE


def _as_array(data) -> np.ndarray:
    if isinstance(data, Tensor):
        return data.data
    arr = np.asarray(data)
    if arr.dtype != _DTYPE:
        arr = arr.astype(_DTYPE)
    return arr


class Tensor:
    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = _as_array(data)
        if arr.ndim > 3:
            raise ShapeError(f"tensors are limited to rank 3, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @classmethod
    def _make(cls, data: np.ndarray, parents, backward) -> "Tensor":
        """Build an op result. ``backward(g)`` returns one gradient (or None) per parent."""
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division is only supported by constants")
        return mul(self, 1.0 / np.asarray(other, dtype=_DTYPE))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def backward(self) -> None:
        if self.data.size != 1:
            raise ShapeError(f"backward needs a scalar root, got shape {self.shape}")
        order = _topological_order(self)
        for node in order:
            if not node._parents and node.requires_grad and node.grad is not None:
                raise RuntimeError(
                    "leaf tensor already holds a gradient; call zero_grad() before "
                    "another backward pass"
                )
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                if node.requires_grad and not node._parents:
                    node.grad = np.zeros_like(node.data)
                continue
            if node.requires_grad:
                node.grad = g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
            # release the graph; a second backward from this root hits the leaf check
            node._parents = ()
            node._backward = None


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"cannot broadcast shapes {a.shape} and {b.shape}") from None


# elementwise ---------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._make(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._make(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b)

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._make(a.data * b.data, (a, b), backward)


def square(x) -> Tensor:
    x = as_tensor(x)
    return Tensor._make(x.data * x.data, (x,), lambda g: (2.0 * x.data * g,))


def elu(x, alpha: float = 1.0) -> Tensor:
    """x for x > 0, alpha * (exp(x) - 1) otherwise."""
    x = as_tensor(x)
    pos = x.data > 0
    neg_part = np.expm1(np.minimum(x.data, 0.0))
    out = np.where(pos, x.data, alpha * neg_part)

    def backward(g):
        return (g * np.where(pos, 1.0, alpha * (neg_part + 1.0)),)

    return Tensor._make(out, (x,), backward)


# reductions and reshaping ---------------------------------------------------


def tsum(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor._make(np.asarray(out), (x,), backward)


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return tsum(x, axis=axis, keepdims=keepdims) * (1.0 / count)


def swapaxes(x, axis1: int = -1, axis2: int = -2) -> Tensor:
    x = as_tensor(x)
    return Tensor._make(
        np.swapaxes(x.data, axis1, axis2), (x,), lambda g: (np.swapaxes(g, axis1, axis2),)
    )


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = x.data.reshape(shape)
    if out.ndim > 3:
        raise ShapeError(f"reshape to rank {out.ndim} exceeds rank 3")
    return Tensor._make(out, (x,), lambda g: (g.reshape(x.shape),))


def split_heads(x, n_heads: int) -> Tensor:
    """(N, L, H*d) -> (N*H, L, d)."""
    x = as_tensor(x)
    n, length, width = x.shape
    if width % n_heads:
        raise ShapeError(f"channel extent {width} not divisible by {n_heads} heads")
    d = width // n_heads
    out = x.data.reshape(n, length, n_heads, d).transpose(0, 2, 1, 3).reshape(n * n_heads, length, d)

    def backward(g):
        return (g.reshape(n, n_heads, length, d).transpose(0, 2, 1, 3).reshape(n, length, width),)

    return Tensor._make(out, (x,), backward)


def merge_heads(x, n_heads: int) -> Tensor:
    """(N*H, L, d) -> (N, L, H*d)."""
    x = as_tensor(x)
    nh, length, d = x.shape
    n = nh // n_heads
    out = x.data.reshape(n, n_heads, length, d).transpose(0, 2, 1, 3).reshape(n, length, n_heads * d)

    def backward(g):
        return (g.reshape(n, length, n_heads, d).transpose(0, 2, 1, 3).reshape(nh, length, d),)

    return Tensor._make(out, (x,), backward)


def concat_time(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0] or a.shape[2] != b.shape[2]:
        raise ShapeError(f"concat_time needs matching batch/channel extents, got {a.shape} and {b.shape}")
    la = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)
    return Tensor._make(out, (a, b), lambda g: (g[:, :la], g[:, la:]))


def slice_time(x, start: int, stop: int) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        full = np.zeros_like(x.data)
        full[:, start:stop] = g
        return (full,)

    return Tensor._make(x.data[:, start:stop], (x,), backward)


def take_rows(x, index: np.ndarray) -> Tensor:
    """Gather time positions per batch row: x (B, L, C), index (B, u) -> (B, u, C)."""
    x = as_tensor(x)
    rows = np.arange(x.shape[0])[:, None]
    out = x.data[rows, index]

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, (rows, index), g)
        return (full,)

    return Tensor._make(out, (x,), backward)


def put_rows(base, index: np.ndarray, rows) -> Tensor:
    """Copy of ``base`` with time positions ``index`` (B, u) replaced by ``rows``."""
    base, rows = as_tensor(base), as_tensor(rows)
    batch = np.arange(base.shape[0])[:, None]
    out = base.data.copy()
    out[batch, index] = rows.data

    def backward(g):
        gb = g.copy()
        gb[batch, index] = 0.0
        return gb, g[batch, index]

    return Tensor._make(out, (base, rows), backward)


def cummean_time(x) -> Tensor:
    """Running mean along time: out[:, i] = mean(x[:, :i+1])."""
    x = as_tensor(x)
    counts = np.arange(1, x.shape[1] + 1, dtype=x.data.dtype)[None, :, None]
    out = np.cumsum(x.data, axis=1) / counts

    def backward(g):
        scaled = g / counts
        return (np.cumsum(scaled[:, ::-1], axis=1)[:, ::-1],)

    return Tensor._make(out, (x,), backward)


# linear algebra -------------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    if a.ndim == 3 and b.ndim == 3 and a.shape[0] != b.shape[0] and 1 not in (a.shape[0], b.shape[0]):
        raise ShapeError(f"matmul batch extents differ: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._make(out, (a, b), backward)


def linear(x, weight, bias=None) -> Tensor:
    """Affine map per position; ``weight`` is (C_in, C_out)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {weight.shape}")
    c_in, c_out = weight.shape
    flat = x.data.reshape(-1, c_in)
    out = (flat @ weight.data).reshape(x.shape[:-1] + (c_out,))
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (c_out,):
            raise ShapeError(f"linear: bias {bias.shape} does not match C_out={c_out}")
        out = out + bias.data
        parents.append(bias)

    def backward(g):
        g2 = g.reshape(-1, c_out)
        gx = (g2 @ weight.data.T).reshape(x.shape) if x.requires_grad else None
        gw = flat.T @ g2 if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return Tensor._make(out, parents, backward)


def softmax(x, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Softmax along ``axis``; positions where ``mask`` is False get weight 0."""
    x = as_tensor(x)
    if not np.all(np.isfinite(x.data)):
        raise NonFiniteError("softmax input contains non-finite values")
    logits = x.data if mask is None else np.where(mask, x.data, -np.inf)
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._make(out, (x,), backward)


# convolution family -----------------------------------------------------------


@dataclass(frozen=True)
class ConvSpec:
    kernel_size: int
    stride: int = 1
    padding: int = 0
    in_channels: int = 1
    out_channels: int = 1

    def __post_init__(self):
        if self.kernel_size < 1 or self.stride < 1 or self.padding < 0:
            raise ValueError(f"invalid conv spec {self}")

    def out_length(self, length: int) -> int:
        return (length + 2 * self.padding - self.kernel_size) // self.stride + 1

    def transposed_length(self, length: int) -> int:
        return (length - 1) * self.stride - 2 * self.padding + self.kernel_size


def _pad_time(x: np.ndarray, padding: int, value: float = 0.0) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (padding, padding), (0, 0)), constant_values=value)


def _windows(xp: np.ndarray, kernel_size: int, stride: int) -> np.ndarray:
    # (N, L', C, K)
    return sliding_window_view(xp, kernel_size, axis=1)[:, ::stride]


def _scatter_windows(grad_cols: np.ndarray, padded_len: int, stride: int) -> np.ndarray:
    n, out_len, c, k = grad_cols.shape
    gxp = np.zeros((n, padded_len, c), dtype=grad_cols.dtype)
    span = stride * (out_len - 1) + 1
    for m in range(k):
        gxp[:, m : m + span : stride] += grad_cols[..., m]
    return gxp


def conv1d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Zero-padded cross-correlation. ``weight`` is (C_out, C_in, K)."""
    x, weight = as_tensor(x), as_tensor(weight)
    n, length, c_in = x.shape
    c_out, w_in, k = weight.shape
    if w_in != c_in:
        raise ShapeError(f"conv1d: input channels {c_in} != weight in-channels {w_in}")
    if length + 2 * padding < k:
        raise ShapeError(f"conv1d: length {length} with padding {padding} shorter than kernel {k}")
    xp = _pad_time(x.data, padding)
    cols = _windows(xp, k, stride)
    out_len = cols.shape[1]
    cols2d = cols.reshape(n * out_len, c_in * k)
    w2d = weight.data.reshape(c_out, c_in * k)
    out = (cols2d @ w2d.T).reshape(n, out_len, c_out)
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
        parents.append(bias)

    def backward(g):
        g2 = g.reshape(-1, c_out)
        gx = None
        if x.requires_grad:
            gcols = (g2 @ w2d).reshape(n, out_len, c_in, k)
            gx = _scatter_windows(gcols, xp.shape[1], stride)[:, padding : padding + length]
        gw = (g2.T @ cols2d).reshape(weight.shape) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return Tensor._make(out, parents, backward)


def conv_transpose1d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Adjoint of :func:`conv1d`. ``weight`` is (C_in, C_out, K)."""
    x, weight = as_tensor(x), as_tensor(weight)
    n, length, c_in = x.shape
    w_in, c_out, k = weight.shape
    if w_in != c_in:
        raise ShapeError(f"conv_transpose1d: input channels {c_in} != weight in-channels {w_in}")
    full_len = (length - 1) * stride + k
    out_len = full_len - 2 * padding
    if out_len < 1:
        raise ShapeError(f"conv_transpose1d: output length {out_len} < 1")
    w2d = weight.data.reshape(c_in, c_out * k)
    x2d = x.data.reshape(n * length, c_in)
    xw = (x2d @ w2d).reshape(n, length, c_out, k)
    full = np.zeros((n, full_len, c_out), dtype=xw.dtype)
    span = stride * (length - 1) + 1
    for m in range(k):
        full[:, m : m + span : stride] += xw[..., m]
    out = full[:, padding : padding + out_len]
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
        parents.append(bias)

    def backward(g):
        gfull = _pad_time(g, padding)
        gxw = np.stack([gfull[:, m : m + span : stride] for m in range(k)], axis=-1)
        gxw2d = gxw.reshape(n * length, c_out * k)
        gx = (gxw2d @ w2d.T).reshape(x.shape) if x.requires_grad else None
        gw = (x2d.T @ gxw2d).reshape(weight.shape) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g.reshape(-1, c_out).sum(axis=0)

    return Tensor._make(np.ascontiguousarray(out), parents, backward)


def maxpool1d(x, kernel_size: int, stride: int | None = None, padding: int = 0) -> Tensor:
    """Window max per channel; padded slots are -inf and never win.

    Ties route the gradient to the lowest index in the window.
    """
    x = as_tensor(x)
    stride = kernel_size if stride is None else stride
    n, length, c = x.shape
    if padding > kernel_size // 2:
        raise ShapeError(f"maxpool1d: padding {padding} exceeds half the kernel {kernel_size}")
    if length + 2 * padding < kernel_size:
        raise ShapeError(f"maxpool1d: padded length {length + 2 * padding} < kernel {kernel_size}")
    xp = _pad_time(x.data, padding, -np.inf)
    win = _windows(xp, kernel_size, stride)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    out_len = out.shape[1]
    pos = arg + (np.arange(out_len) * stride)[None, :, None]

    def backward(g):
        gxp = np.zeros(xp.shape, dtype=g.dtype)
        ni = np.arange(n)[:, None, None]
        ci = np.arange(c)[None, None, :]
        np.add.at(gxp, (ni, pos, ci), g)
        return (gxp[:, padding : padding + length],)

    return Tensor._make(out, (x,), backward)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the channel axis with population variance."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"layer_norm: gamma {gamma.shape}/beta {beta.shape} vs channels {c}")
    if eps <= 0:
        raise ValueError("layer_norm epsilon must be positive")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        gx = None
        if x.requires_grad:
            gh = g * gamma.data
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor._make(out, (x, gamma, beta), backward)


# parameters -----------------------------------------------------------------------


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=_DTYPE), requires_grad=True, name=name)


class Module:
    """Container that discovers parameters and sub-modules from its attributes."""

    def named_parameters(self, prefix: str = ""):
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=p.data.dtype)
            if arr.shape != p.shape:
                raise ShapeError(f"{name}: expected {p.shape}, got {arr.shape}")
            p.data = arr.copy()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, bias: bool = True):
        self.weight = parameter(uniform_init(rng, (c_in, c_out), c_in))
        self.bias = parameter(uniform_init(rng, (c_out,), c_in)) if bias else None

    def forward(self, x):
        return linear(x, self.weight, self.bias)


class Conv1d(Module):
    def __init__(self, spec: ConvSpec, rng: np.random.Generator, bias: bool = True):
        self.spec = spec
        fan_in = spec.in_channels * spec.kernel_size
        shape = (spec.out_channels, spec.in_channels, spec.kernel_size)
        self.weight = parameter(uniform_init(rng, shape, fan_in))
        self.bias = parameter(uniform_init(rng, (spec.out_channels,), fan_in)) if bias else None

    def forward(self, x):
        return conv1d(x, self.weight, self.bias, self.spec.stride, self.spec.padding)


class ConvTranspose1d(Module):
    def __init__(self, spec: ConvSpec, rng: np.random.Generator, bias: bool = True):
        self.spec = spec
        fan_in = spec.out_channels * spec.kernel_size
        shape = (spec.in_channels, spec.out_channels, spec.kernel_size)
        self.weight = parameter(uniform_init(rng, shape, fan_in))
        self.bias = parameter(uniform_init(rng, (spec.out_channels,), fan_in)) if bias else None

    def forward(self, x):
        return conv_transpose1d(x, self.weight, self.bias, self.spec.stride, self.spec.padding)


class LayerNorm(Module):
    def __init__(self, channels: int, eps: float = 1e-5):
        self.gamma = parameter(np.ones(channels))
        self.beta = parameter(np.zeros(channels))
        self.eps = eps

    def forward(self, x):
        return layer_norm(x, self.gamma, self.beta, self.eps)
