"""Dense float64 tensors with reverse-mode gradients.

A `Tensor` wraps a numpy array and remembers how it was produced; calling
`backward()` on a scalar loss walks the graph once in reverse topological
order and accumulates gradients into every reachable node. `Parameter` is
a leaf tensor that additionally carries optimizer state.

The op set is deliberately small: exactly what the encoder/decoder stack,
the experts and the losses need. It is an internal tool, not a public
autodiff layer. All arithmetic is float64; inputs of other dtypes are
promoted on construction.

Gradient conventions (g = upstream gradient of the node's output):
  matmul(a, b): da = g @ b^T, db = a^T @ g (batch dims summed out)
  broadcasted add/mul/div: grads summed back down to each operand's shape

Index-based ops (gather/scatter) require duplicate-free indices; every
call site here satisfies that (mask partitions and expert routing are
sets).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "Parameter",
    "const",
    "matmul",
    "add",
    "sub",
    "mul",
    "tdiv",
    "transpose_last2",
    "concat_last",
    "reshape",
    "tsum",
    "softmax_rows",
    "layer_norm",
    "gelu",
    "gather_rows",
    "scatter_rows",
    "gather_gate",
    "dropout",
    "xavier_init",
]

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor:
    """Graph node: float64 data plus an optional backward closure."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def backward(self) -> None:
        """Accumulate gradients of this scalar into all reachable nodes."""
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


class Parameter(Tensor):
    """Trainable leaf: value, accumulated gradient, Adam moments, step count."""

    __slots__ = ("name", "m", "v", "step")

    def __init__(self, data, name: str):
        super().__init__(data)
        self.name = name
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.step = 0

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def const(data) -> Tensor:
    """Wrap raw data as a graph constant."""
    return Tensor(data)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray) -> None:
    # Never mutate in place: propagated arrays may be shared between nodes.
    t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g down to `shape` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul inner extents differ: {a.shape} @ {b.shape}")

    if a.ndim > 2 and b.ndim == 2:
        # (..., m, k) @ (k, n): flatten the batch axes into one GEMM; the
        # weight gradient then needs no batched product plus reduction.
        k, n = b.shape
        a2 = a.data.reshape(-1, k)
        out = Tensor((a2 @ b.data).reshape(a.shape[:-1] + (n,)), (a, b))

        def bwd(g):
            g2 = g.reshape(-1, n)
            _accum(a, (g2 @ b.data.T).reshape(a.shape))
            _accum(b, a2.T @ g2)

        out._backward = bwd
        return out

    out = Tensor(np.matmul(a.data, b.data), (a, b))

    def bwd(g):
        _accum(a, _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        _accum(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))

    out._backward = bwd
    return out


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data, (a, b))

    def bwd(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    out._backward = bwd
    return out


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data - b.data, (a, b))

    def bwd(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    out._backward = bwd
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data, (a, b))

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    out._backward = bwd
    return out


def tdiv(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data / b.data, (a, b))

    def bwd(g):
        _accum(a, _unbroadcast(g / b.data, a.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    out._backward = bwd
    return out


def transpose_last2(x: Tensor) -> Tensor:
    out = Tensor(np.swapaxes(x.data, -1, -2), (x,))
    out._backward = lambda g: _accum(x, np.swapaxes(g, -1, -2))
    return out


def swap_axes(x: Tensor, ax1: int, ax2: int) -> Tensor:
    out = Tensor(np.swapaxes(x.data, ax1, ax2), (x,))
    out._backward = lambda g: _accum(x, np.swapaxes(g, ax1, ax2))
    return out


def concat_last(parts: list) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    out = Tensor(np.concatenate([p.data for p in parts], axis=-1), tuple(parts))
    widths = [p.shape[-1] for p in parts]

    def bwd(g):
        offset = 0
        for p, w in zip(parts, widths):
            _accum(p, g[..., offset : offset + w])
            offset += w

    out._backward = bwd
    return out


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape), (x,))
    out._backward = lambda g: _accum(x, g.reshape(x.shape))
    return out


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = Tensor(np.sum(x.data, axis=axis, keepdims=keepdims), (x,))

    def bwd(g):
        if axis is None:
            _accum(x, np.broadcast_to(g, x.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g, x.shape).copy())

    out._backward = bwd
    return out


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilized by row-max subtraction."""
    x = _as_tensor(x)
    shifted = x.data - np.max(x.data, axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / np.sum(e, axis=-1, keepdims=True)
    out = Tensor(s, (x,))

    def bwd(g):
        _accum(x, s * (g - np.sum(g * s, axis=-1, keepdims=True)))

    out._backward = bwd
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-6) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.shape[-1]
    if d < 2:
        raise ValueError("layer_norm needs a feature axis of extent >= 2")
    mu = np.mean(x.data, axis=-1, keepdims=True)
    var = np.mean((x.data - mu) ** 2, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = Tensor(xhat * gain.data + bias.data, (x, gain, bias))

    def bwd(g):
        _accum(gain, _unbroadcast(g * xhat, gain.shape))
        _accum(bias, _unbroadcast(g, bias.shape))
        gh = g * gain.data
        gx = inv * (
            gh
            - np.mean(gh, axis=-1, keepdims=True)
            - xhat * np.mean(gh * xhat, axis=-1, keepdims=True)
        )
        _accum(x, gx)

    out._backward = bwd
    return out


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-CDF GELU: x * Phi(x)."""
    x = _as_tensor(x)
    phi_cdf = erf(x.data * _INV_SQRT2)
    phi_cdf += 1.0
    phi_cdf *= 0.5
    out = Tensor(x.data * phi_cdf, (x,))

    def bwd(g):
        pdf = x.data * x.data
        pdf *= -0.5
        np.exp(pdf, out=pdf)
        pdf *= _INV_SQRT_2PI
        pdf *= x.data
        pdf += phi_cdf
        _accum(x, g * pdf)

    out._backward = bwd
    return out


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows along axis -2. idx is 1-D (shared) or (B, n) per batch.

    Indices must be duplicate-free.
    """
    x = _as_tensor(x)
    idx = np.asarray(idx, dtype=np.intp)
    if idx.ndim == 1:
        out_data = x.data[..., idx, :]
    else:
        out_data = np.take_along_axis(x.data, idx[..., :, None], axis=-2)
    out = Tensor(out_data, (x,))

    def bwd(g):
        gx = np.zeros_like(x.data)
        if idx.ndim == 1:
            gx[..., idx, :] = g
        else:
            batch = np.arange(idx.shape[0])[:, None]
            gx[batch, idx] = g
        _accum(x, gx)

    out._backward = bwd
    return out


def scatter_rows(x: Tensor, idx: np.ndarray, n_rows: int) -> Tensor:
    """Place rows of x at positions idx in a zero tensor of n_rows rows.

    Inverse of gather_rows; indices must be duplicate-free.
    """
    x = _as_tensor(x)
    idx = np.asarray(idx, dtype=np.intp)
    shape = x.shape[:-2] + (n_rows, x.shape[-1])
    out_data = np.zeros(shape, dtype=np.float64)
    if idx.ndim == 1:
        out_data[..., idx, :] = x.data
    else:
        batch = np.arange(idx.shape[0])[:, None]
        out_data[batch, idx] = x.data
    out = Tensor(out_data, (x,))

    def bwd(g):
        if idx.ndim == 1:
            _accum(x, g[..., idx, :])
        else:
            _accum(x, np.take_along_axis(g, idx[..., :, None], axis=-2))

    out._backward = bwd
    return out


def gather_gate(pi: Tensor, rows: np.ndarray, col: int) -> Tensor:
    """Column slice pi[rows, col] as an (n, 1) tensor (2-D pi only)."""
    pi = _as_tensor(pi)
    rows = np.asarray(rows, dtype=np.intp)
    out = Tensor(pi.data[rows, col][:, None], (pi,))

    def bwd(g):
        gp = np.zeros_like(pi.data)
        gp[rows, col] = g[:, 0]
        _accum(pi, gp)

    out._backward = bwd
    return out


def dropout(x: Tensor, p: float, rng, train: bool) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    if not train or p == 0.0:
        return x
    keep = (~rng.bernoulli(p, x.shape)).astype(np.float64) / (1.0 - p)
    return mul(x, const(keep))


def xavier_init(shape, rng) -> np.ndarray:
    """Uniform Glorot init on +-sqrt(6 / (fan_in + fan_out)); 2-D shapes only."""
    if len(shape) != 2:
        raise ValueError(f"xavier_init requires a 2-D shape, got {tuple(shape)}")
    fan_in, fan_out = int(shape[0]), int(shape[1])
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, (fan_in, fan_out))
