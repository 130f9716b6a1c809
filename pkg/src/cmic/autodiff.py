"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

A Var wraps an ndarray and remembers how it was produced; ``backward`` walks
the recorded graph once in reverse topological order and accumulates exact
vector-Jacobian products into ``.grad``. Only the handful of operations the
losses in this package need are provided.

Every operation checks its result for non-finite entries and aborts with
NumericalError instead of letting NaN/inf propagate silently.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, InvalidInput, NumericalError
from .numerics import LOG_FLOOR


class Var:
    """Graph node: value, accumulated gradient, and the backward closure."""

    __slots__ = ("value", "grad", "parents", "vjp")

    def __init__(self, value, parents=(), vjp=None, op="leaf"):
        self.value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(self.value)):
            raise NumericalError(f"non-finite result in op '{op}'")
        self.grad = None
        self.parents = parents
        self.vjp = vjp

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __radd__ = __add__
    __rmul__ = __mul__


def _wrap(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _unbroadcast(grad, shape):
    # reduce a broadcasted gradient back to the operand's shape
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    return Var(a.value + b.value, (a, b),
               lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
               op="add")


def sub(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    return Var(a.value - b.value, (a, b),
               lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
               op="sub")


def mul(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    return Var(a.value * b.value, (a, b),
               lambda g: (_unbroadcast(g * b.value, a.shape),
                          _unbroadcast(g * a.value, b.shape)),
               op="mul")


def matmul(a, b) -> Var:
    a, b = _wrap(a), _wrap(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionMismatch(f"matmul: {a.shape} @ {b.shape}")
    return Var(a.value @ b.value, (a, b),
               lambda g: (g @ b.value.T, a.value.T @ g),
               op="matmul")


def relu(a) -> Var:
    a = _wrap(a)
    mask = a.value > 0.0
    return Var(np.where(mask, a.value, 0.0), (a,),
               lambda g: (g * mask,), op="relu")


def log(a) -> Var:
    """Natural log floored at LOG_FLOOR; gradient is 0 on the floored region."""
    a = _wrap(a)
    clamped = np.maximum(a.value, LOG_FLOOR)
    live = a.value > LOG_FLOOR
    return Var(np.log(clamped), (a,),
               lambda g: (np.where(live, g / clamped, 0.0),), op="log")


def softmax_rows(a) -> Var:
    """Row-wise softmax of a 2-D logit matrix, with the max-shift trick."""
    a = _wrap(a)
    if a.value.ndim != 2:
        raise InvalidInput("softmax_rows: expected a 2-D matrix")
    e = np.exp(a.value - a.value.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)
    return Var(p, (a,),
               lambda g: (p * (g - (g * p).sum(axis=1, keepdims=True)),),
               op="softmax_rows")


def total_sum(a) -> Var:
    a = _wrap(a)
    shape = a.shape
    return Var(a.value.sum(), (a,),
               lambda g: (np.broadcast_to(g, shape).copy(),), op="sum")


def scale(a, s: float) -> Var:
    a = _wrap(a)
    s = float(s)
    return Var(a.value * s, (a,), lambda g: (g * s,), op="scale")


def constant(x) -> Var:
    """A leaf that participates in the graph but never receives gradients."""
    return Var(np.asarray(x, dtype=np.float64))


def _topo_order(root: Var):
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            stack.append((parent, False))
    return order  # parents before children


def backward(loss: Var) -> None:
    """Populate ``.grad`` on every node reachable from ``loss``.

    ``loss`` must be a scalar (size-1) node.
    """
    if loss.value.size != 1:
        raise InvalidInput(f"backward: loss must be scalar, got shape {loss.shape}")
    order = _topo_order(loss)
    for node in order:
        node.grad = np.zeros_like(node.value)
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node.vjp is None or not node.parents:
            continue
        parent_grads = node.vjp(node.grad)
        for parent, pg in zip(node.parents, parent_grads):
            parent.grad = parent.grad + pg
