"""Dense float64 tensors with tape-free reverse-mode differentiation.

Every differentiable operation returns a new :class:`Tensor` that remembers
its parents and a closure mapping the output gradient to parent gradients.
Tensors receive a monotonically increasing sequence number on creation, so
sorting the reachable set by that number gives a valid reverse topological
order for :func:`backward`.

Only the operations needed by the GRU encoder-decoder and the graph network
are provided. Broadcasting follows numpy rules and gradients are reduced back
to the operand shapes.
"""
from __future__ import annotations

import functools
import itertools
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.special import expit

from ..errors import ContractError, DimensionError

_seq = itertools.count()


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "op", "seq")
    __array_ufunc__ = None  # let ndarray operands defer to the reflected Tensor methods

    def __init__(self, data, requires_grad: bool = False, parents: tuple = (),
                 backward_fn: Callable | None = None, op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op
        self.seq = next(_seq)

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self.parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    # -- operators -----------------------------------------------------
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def backward(self, grad=None) -> None:
        backward(self, grad)


def _not_scalar(t):
    raise ContractError(f"item() needs a single-element tensor, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_op(data, parents: Sequence[Tensor], fn, op: str) -> Tensor:
    """Wrap a forward result with its parents and gradient closure.

    ``fn(g)`` returns one gradient (or ``None``) per parent. The result only
    tracks gradients when some parent does.
    """
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), fn, op)
    return Tensor(data, op=op)


_make = make_op


def matmul_grads(a: Tensor, b: Tensor, g: np.ndarray):
    """Gradients of ``a @ b`` for upstream ``g``, reduced to operand shapes."""
    ga = gb = None
    if a.requires_grad:
        ga = unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
    if b.requires_grad:
        if b.ndim == 2:
            # one GEMM over all leading axes instead of a batched product
            k, n = b.shape
            gb = a.data.reshape(-1, k).T @ g.reshape(-1, n)
        else:
            gb = unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
    return ga, gb


def row_scatter(values: np.ndarray, index: np.ndarray, num_rows: int) -> np.ndarray:
    """``out[index[k]] += values[k]`` with rows summed in ascending ``k``.

    A sparse incidence product keeps the accumulation order fixed and is much
    faster than ``np.add.at`` for wide rows.
    """
    n = len(index)
    if n == 0:
        return np.zeros((num_rows,) + values.shape[1:])
    flat = values.reshape(n, -1)
    index = np.ascontiguousarray(index, dtype=np.intp)
    out = _incidence(index.tobytes(), num_rows) @ flat
    return np.asarray(out).reshape((num_rows,) + values.shape[1:])


@functools.lru_cache(maxsize=256)
def _incidence(index_bytes: bytes, num_rows: int) -> csr_matrix:
    """0/1 matrix with a one at ``(index[k], k)``; columns ascend within each row."""
    index = np.frombuffer(index_bytes, dtype=np.intp)
    n = index.size
    order = np.argsort(index, kind="stable")
    indptr = np.zeros(num_rows + 1, dtype=np.intp)
    np.cumsum(np.bincount(index, minlength=num_rows), out=indptr[1:])
    return csr_matrix((np.ones(n), order, indptr), shape=(num_rows, n))


def unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# -- binary elementwise ------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def fn(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), fn, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def fn(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), fn, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def fn(g):
        ga = unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _make(a.data * b.data, (a, b), fn, "mul")


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul: batch axes of {a.shape} and {b.shape} do not broadcast") from None

    return _make(a.data @ b.data, (a, b), lambda g: matmul_grads(a, b, g), "matmul")


# -- unary -------------------------------------------------------------

def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = expit(x.data)
    return _make(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def tanh(x) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.data)
    return _make(t, (x,), lambda g: (g * (1.0 - t * t),), "tanh")


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def square(x) -> Tensor:
    x = as_tensor(x)
    return _make(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,), "square")


# -- shape manipulation ------------------------------------------------

def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise DimensionError("concat: no operands")
    nd = ts[0].ndim
    ax = axis % nd
    for t in ts:
        if t.ndim != nd or t.shape[:ax] + t.shape[ax + 1:] != ts[0].shape[:ax] + ts[0].shape[ax + 1:]:
            raise DimensionError(f"concat: incompatible shapes {[t.shape for t in ts]} on axis {axis}")
    bounds = np.cumsum([0] + [t.shape[ax] for t in ts])

    def fn(g):
        out = []
        for t, lo, hi in zip(ts, bounds[:-1], bounds[1:]):
            out.append(g[(slice(None),) * ax + (slice(lo, hi),)] if t.requires_grad else None)
        return tuple(out)

    return _make(np.concatenate([t.data for t in ts], axis=ax), ts, fn, "concat")


def slice_last(x, start: int, stop: int) -> Tensor:
    """``x[..., start:stop]``."""
    x = as_tensor(x)
    if not 0 <= start <= stop <= x.shape[-1]:
        raise DimensionError(f"slice [{start}:{stop}] out of range for last axis of {x.shape}")

    def fn(g):
        full = np.zeros_like(x.data)
        full[..., start:stop] = g
        return (full,)

    return _make(x.data[..., start:stop], (x,), fn, "slice")


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def broadcast_to(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out = np.broadcast_to(x.data, shape)
    except ValueError:
        raise DimensionError(f"cannot broadcast {x.shape} to {tuple(shape)}") from None
    return _make(out, (x,), lambda g: (unbroadcast(g, x.shape),), "broadcast")


def take(x, index, axis: int = 0) -> Tensor:
    """Gather entries of ``x`` along ``axis`` (rows by default)."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.intp)
    ax = axis % x.ndim

    def fn(g):
        if ax == 0:
            return (row_scatter(g, index, x.shape[0]),)
        full = np.zeros_like(x.data)
        np.add.at(full, (slice(None),) * ax + (index,), g)
        return (full,)

    return _make(np.take(x.data, index, axis=ax), (x,), fn, "take")


def segment_sum(x, segment_ids, num_segments: int) -> Tensor:
    """Sum rows of ``x`` (axis 0) into ``num_segments`` buckets.

    Rows are accumulated in their order of appearance, so the result is
    reproducible for a fixed row order. Empty buckets are zero.
    """
    x = as_tensor(x)
    ids = np.asarray(segment_ids, dtype=np.intp)
    if ids.shape != (x.shape[0],):
        raise DimensionError(f"segment ids {ids.shape} do not match leading axis of {x.shape}")
    if len(ids) and (ids.min() < 0 or ids.max() >= num_segments):
        raise DimensionError(f"segment ids must lie in [0, {num_segments})")
    out = row_scatter(x.data, ids, num_segments)
    return _make(out, (x,), lambda g: (g[ids],), "segment_sum")


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(out, (x,), fn, "sum")


def mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    n = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis), 1.0 / n)


def sorted_sum(x) -> Tensor:
    """Sum over axis 0 with a result independent of row order.

    Each column is sorted before accumulation so that any permutation of the
    rows yields a bitwise-identical sum.
    """
    x = as_tensor(x)
    if x.shape[0] == 0:
        out = np.zeros(x.shape[1:])
    else:
        out = np.add.reduce(np.sort(x.data, axis=0), axis=0)
    return _make(out, (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),), "sorted_sum")


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "relu": relu,
    "concat": lambda *ts: concat(ts, axis=-1),
    "slice": slice_last,
}


def elementwise(op: str, *args) -> Tensor:
    """Dispatch by name: add, sub, mul, sigmoid, tanh, relu, concat, slice."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


# -- reverse pass ------------------------------------------------------

def _reachable(root: Tensor) -> list[Tensor]:
    seen, order, stack = set(), [], [root]
    while stack:
        t = stack.pop()
        if id(t) in seen or not t.requires_grad:
            continue
        seen.add(id(t))
        order.append(t)
        stack.extend(t.parents)
    order.sort(key=lambda t: t.seq, reverse=True)
    return order


def backward(root: Tensor, grad=None) -> None:
    """Propagate gradients from ``root`` to every reachable tensor.

    With ``grad=None`` the root must hold a single element and is seeded
    with 1. Supplying ``grad`` seeds an arbitrary-shaped intermediate tensor,
    which is equivalent to differentiating ``sum(grad * root)``. Leaf
    gradients accumulate across calls; intermediate tensors keep the gradient
    from the most recent pass only.
    """
    if grad is None:
        if root.size != 1:
            raise ContractError(
                f"backward on a non-scalar tensor of shape {root.shape} needs an explicit seed gradient")
        grad = np.ones_like(root.data)
    else:
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != root.shape:
            raise DimensionError(f"seed gradient shape {grad.shape} does not match tensor {root.shape}")
    if not root.requires_grad:
        raise ContractError("backward called on a tensor that does not require grad")

    grads: dict[int, np.ndarray] = {id(root): grad}
    for t in _reachable(root):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t.is_leaf:
            t.grad = g.copy() if t.grad is None else t.grad + g
            continue
        t.grad = g
        for p, pg in zip(t.parents, t.backward_fn(g)):
            if pg is None or not p.requires_grad:
                continue
            k = id(p)
            grads[k] = pg if k not in grads else grads[k] + pg
