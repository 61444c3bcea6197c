"""A small reverse-mode differentiation tape over float64 numpy arrays.

Only the operations the priority model needs are provided. Every op returns
a :class:`Tensor` that remembers its parents and a closure propagating the
output gradient to them; :func:`backward` walks that graph in reverse
topological order.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np
from scipy import sparse

_DEBUG = False
_RECORD = True


class ShapeError(ValueError):
    pass


class StateError(RuntimeError):
    pass


def set_debug(flag: bool) -> None:
    """Check every op output for NaN/Inf when enabled."""
    global _DEBUG
    _DEBUG = bool(flag)


@contextlib.contextmanager
def no_grad():
    global _RECORD
    prev, _RECORD = _RECORD, False
    try:
        yield
    finally:
        _RECORD = prev


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad", "sink")

    def __init__(self, data, requires_grad: bool = False, parents: tuple = (),
                 backward_fn: Callable | None = None, sink: Callable | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.parents = parents
        self.backward_fn = backward_fn
        self.sink = sink  # called with the final gradient of a parameter leaf

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return gather(self, idx)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(np.array(x, dtype=np.float64))


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    if _DEBUG and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite value produced by " + backward_fn.__qualname__)
    req = _RECORD and any(p.requires_grad for p in parents)
    if not req:
        return Tensor(data)
    return Tensor(data, True, parents, backward_fn)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return _make(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    """Elementwise product with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), bw)


def hadamard(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard: shapes {a.shape} and {b.shape} differ")
    return mul(a, b)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def bw(g):
        if b.data.ndim == 1:
            return np.outer(g, b.data), a.data.T @ g
        return g @ b.data.T, a.data.T @ g

    return _make(a.data @ b.data, (a, b), bw)


def matvec(W, x) -> Tensor:
    W, x = as_tensor(W), as_tensor(x)
    if W.data.ndim != 2 or x.data.ndim != 1 or W.shape[1] != x.shape[0]:
        raise ShapeError(f"matvec: incompatible shapes {W.shape} and {x.shape}")
    return matmul(W, x)


def linear(x, W, b=None) -> Tensor:
    """Row-wise affine map ``x @ W.T + b`` for ``x`` of shape (n, in) or (in,)."""
    x, W = as_tensor(x), as_tensor(W)
    if W.data.ndim != 2 or x.shape[-1] != W.shape[1]:
        raise ShapeError(f"linear: incompatible shapes {x.shape} and {W.shape}")

    def bw(g):
        if x.data.ndim == 1:
            return g @ W.data, np.outer(g, x.data)
        return g @ W.data, g.T @ x.data

    out = _make(x.data @ W.data.T, (x, W), bw)
    return out if b is None else add(out, b)


def batched_matvec(W, x) -> Tensor:
    """``out[i] = W[i] @ x[i]`` for W (n, a, b) and x (n, b)."""
    W, x = as_tensor(W), as_tensor(x)
    if W.data.ndim != 3 or x.data.ndim != 2 or W.shape[0] != x.shape[0] or W.shape[2] != x.shape[1]:
        raise ShapeError(f"batched_matvec: incompatible shapes {W.shape} and {x.shape}")

    def bw(g):
        return g[:, :, None] * x.data[:, None, :], np.einsum("nij,ni->nj", W.data, g)

    return _make(np.einsum("nij,nj->ni", W.data, x.data), (W, x), bw)


def einsum(spec: str, a, b) -> Tensor:
    """Two-operand einsum. Every index of one operand must appear in the other
    operand or in the output."""
    a, b = as_tensor(a), as_tensor(b)
    ins, out = spec.replace(" ", "").split("->")
    sa, sb = ins.split(",")
    try:
        data = np.einsum(spec, a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"einsum {spec}: shapes {a.shape} and {b.shape} ({exc})") from None

    def bw(g):
        return np.einsum(f"{out},{sb}->{sa}", g, b.data), np.einsum(f"{out},{sa}->{sb}", g, a.data)

    return _make(data, (a, b), bw)


def apply_each(W, H) -> Tensor:
    """``out[r] = H @ W[r].T`` for W (R, a, b) and H (n, b): every matrix
    applied to every row, shape (R, n, a)."""
    W, H = as_tensor(W), as_tensor(H)
    if W.data.ndim != 3 or H.data.ndim != 2 or W.shape[2] != H.shape[1]:
        raise ShapeError(f"apply_each: incompatible shapes {W.shape} and {H.shape}")

    def bw(g):
        return np.matmul(g.transpose(0, 2, 1), H.data), np.matmul(g, W.data).sum(axis=0)

    return _make(np.matmul(H.data, W.data.transpose(0, 2, 1)), (W, H), bw)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


_S_LO, _S_HI = np.finfo(float).tiny, np.nextafter(1.0, 0.0)


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # clamp by one ulp at saturation so the output stays strictly inside (0, 1)
    s = np.clip(_sigmoid(np.atleast_1d(x.data)), _S_LO, _S_HI).reshape(x.shape)
    return _make(s, (x,), lambda g: (g * s * (1.0 - s),))


def softplus(x) -> Tensor:
    """log(1 + e^x), stable for large |x|."""
    x = as_tensor(x)
    s = _sigmoid(np.atleast_1d(x.data)).reshape(x.shape)
    return _make(np.logaddexp(0.0, x.data), (x,), lambda g: (g * s,))


def concat(xs: Sequence, axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    ndim = xs[0].data.ndim
    if any(x.data.ndim != ndim for x in xs):
        raise ShapeError("concat: rank mismatch " + " vs ".join(str(x.shape) for x in xs))
    ax = axis % ndim
    for x in xs[1:]:
        if x.shape[:ax] + x.shape[ax + 1:] != xs[0].shape[:ax] + xs[0].shape[ax + 1:]:
            raise ShapeError(f"concat: incompatible shapes {xs[0].shape} and {x.shape}")
    sizes = np.cumsum([x.shape[ax] for x in xs])[:-1]

    def bw(g):
        return tuple(np.split(g, sizes, axis=ax))

    return _make(np.concatenate([x.data for x in xs], axis=ax), tuple(xs), bw)


def stack(xs: Sequence) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    if len({x.shape for x in xs}) > 1:
        raise ShapeError("stack: shapes differ " + ", ".join(str(x.shape) for x in xs))
    return _make(np.stack([x.data for x in xs]), tuple(xs), lambda g: tuple(g))


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), bw)


def gather(x, idx) -> Tensor:
    """``x[idx]`` for an index array or a tuple of index arrays (leading
    axes); repeated indices accumulate in the gradient."""
    x = as_tensor(x)
    idx = tuple(np.asarray(i) for i in idx) if isinstance(idx, tuple) else np.asarray(idx)

    def bw(g):
        if isinstance(idx, tuple):
            lead = x.shape[:len(idx)]
            flat = np.ravel_multi_index(idx, lead).ravel()
            out = _segment_sum(g.reshape((len(flat),) + x.shape[len(idx):]), flat, int(np.prod(lead)))
            return (out.reshape(x.shape),)
        if idx.ndim == 0 or idx.dtype == bool:
            out = np.zeros_like(x.data)
            out[idx] += g
            return (out,)
        return (_segment_sum(g.reshape((idx.size,) + x.shape[1:]), idx.ravel(), x.shape[0]),)

    return _make(x.data[idx], (x,), bw)


def scatter_add(x, idx, n: int) -> Tensor:
    """``out[idx[i]] += x[i]`` into a fresh (n, ...) array."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64)
    if len(idx) != x.shape[0]:
        raise ShapeError(f"scatter_add: {len(idx)} indices for shape {x.shape}")
    out = _segment_sum(x.data, idx, n)
    return _make(out, (x,), lambda g: (g[idx],))


def _segment_sum(values: np.ndarray, idx: np.ndarray, n: int) -> np.ndarray:
    """``out[idx[i]] += values[i]`` along the first axis."""
    if values.ndim == 1:
        return np.bincount(idx, weights=values, minlength=n)
    if len(idx) == 0:
        return np.zeros((n,) + values.shape[1:])
    flat = values.reshape(len(idx), -1)
    S = sparse.csr_matrix((np.ones(len(idx)), (idx, np.arange(len(idx)))), shape=(n, len(idx)))
    return np.asarray(S @ flat).reshape((n,) + values.shape[1:])


def _topo_order(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack_ = [(root, False)]
    while stack_:
        node, done = stack_.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Propagate d(loss)/d(node) to every recorded node and flush parameter
    gradients into their stores."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad or (loss.backward_fn is None and loss.sink is None):
        raise StateError("backward called on a value with no recorded forward computation")
    order = _topo_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        if node.backward_fn is not None:
            for p, pg in zip(node.parents, node.backward_fn(g)):
                if not p.requires_grad:
                    continue
                pg = np.asarray(pg, dtype=np.float64).reshape(p.shape)
                p.grad = pg.copy() if p.grad is None else p.grad + pg
        if node.sink is not None:
            node.sink(g)
