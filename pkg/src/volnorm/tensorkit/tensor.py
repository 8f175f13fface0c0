"""Reverse-mode autodiff over numpy arrays.

Every operation returns a new :class:`Tensor`; when any input requires a
gradient the result records its parents and a closure that pushes the
output gradient back to them. :meth:`Tensor.backward` runs those closures
once in reverse topological order and then releases the graph.
"""
from __future__ import annotations

import numpy as np

from ..errors import GraphConsumed, NonFiniteError, NonScalarLoss, ShapeMismatch

__all__ = ["Tensor", "as_tensor", "DEFAULT_DTYPE"]

DEFAULT_DTYPE = np.float32


def _check_finite(values: np.ndarray, op: str) -> None:
    if not np.isfinite(values).all():
        raise NonFiniteError(f"non-finite value produced by {op}")


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    if grad.shape == tuple(shape):
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """An n-dimensional array that can take part in a differentiable graph.

    Parameters
    ----------
    data : array_like
        Values; stored as float32 unless a float64 array is passed (float64
        is only used by gradient checking).
    requires_grad : bool
        Leaf tensors with this flag accumulate ``.grad`` during backward.
    """

    # make ndarray (op) Tensor defer to Tensor's reflected operators
    __array_ufunc__ = None

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "_op", "_consumed")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple = (), _backward=None, _op: str = "leaf"):
        arr = np.asarray(data)
        if arr.dtype != np.float64:
            arr = arr.astype(DEFAULT_DTYPE, copy=False)
        _check_finite(arr, _op)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if (requires_grad and not _parents) else None
        self.name = name
        self._parents = _parents
        self._backward = _backward
        self._op = _op
        self._consumed = False

    # -- basic properties --------------------------------------------------
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
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self._op}{flag})"

    # -- graph construction -------------------------------------------------
    @staticmethod
    def _make(values, parents, backward, op) -> "Tensor":
        needs = any(p.requires_grad for p in parents)
        if needs:
            return Tensor(values, True, _parents=parents, _backward=backward, _op=op)
        return Tensor(values, _op=op)

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``.grad``."""
        if self.size != 1:
            raise NonScalarLoss(f"backward needs a scalar loss, got shape {self.shape}")
        if self._consumed:
            raise GraphConsumed("backward already ran on this graph; re-run the forward pass")
        if not self.requires_grad:
            self._consumed = True
            return

        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            if node._consumed:
                raise GraphConsumed("graph shares nodes with one that was already back-propagated")
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if node.is_leaf:
                if g is not None:
                    node.grad += g
                continue
            if g is None:
                continue
            contribs = node._backward(g)
            for parent, pg in zip(node._parents, contribs):
                if pg is None or not parent.requires_grad:
                    continue
                pg = _unbroadcast(pg, parent.shape)
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg
        for node in order:
            if not node.is_leaf:
                node._backward = None
                node._parents = ()
                node._consumed = True
        self._consumed = True

    # -- elementwise arithmetic --------------------------------------------
    def __add__(self, other):
        other = as_tensor(other, self.data.dtype)
        return Tensor._make(self.data + other.data, (self, other), lambda g: (g, g), "add")

    __radd__ = __add__

    def __neg__(self):
        return Tensor._make(-self.data, (self,), lambda g: (-g,), "neg")

    def __sub__(self, other):
        other = as_tensor(other, self.data.dtype)
        return Tensor._make(self.data - other.data, (self, other), lambda g: (g, -g), "sub")

    def __rsub__(self, other):
        return as_tensor(other, self.data.dtype) - self

    def __mul__(self, other):
        other = as_tensor(other, self.data.dtype)
        a, b = self.data, other.data
        return Tensor._make(a * b, (self, other), lambda g: (g * b, g * a), "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other, self.data.dtype)
        a, b = self.data, other.data
        return Tensor._make(a / b, (self, other), lambda g: (g / b, -g * a / (b * b)), "div")

    def __pow__(self, exponent: float):
        a = self.data
        e = float(exponent)
        return Tensor._make(a ** e, (self,), lambda g: (g * e * a ** (e - 1),), "pow")

    def square(self):
        a = self.data
        return Tensor._make(a * a, (self,), lambda g: (2 * g * a,), "square")

    def log(self):
        a = self.data
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.log(a)  # non-finite results are rejected by the constructor
        return Tensor._make(out, (self,), lambda g: (g / a,), "log")

    def exp(self):
        out = np.exp(self.data)
        return Tensor._make(out, (self,), lambda g: (g * out,), "exp")

    def clip(self, lo: float, hi: float):
        a = self.data
        inside = (a >= lo) & (a <= hi)
        return Tensor._make(np.clip(a, lo, hi), (self,), lambda g: (g * inside,), "clip")

    # -- reductions and reshaping -------------------------------------------
    def sum(self):
        shape = self.shape
        dtype = self.data.dtype
        return Tensor._make(self.data.sum(dtype=dtype), (self,),
                            lambda g: (np.broadcast_to(g, shape).astype(dtype),), "sum")

    def mean(self):
        n = self.size
        shape = self.shape
        dtype = self.data.dtype
        return Tensor._make(self.data.mean(dtype=dtype), (self,),
                            lambda g: (np.broadcast_to(g / n, shape).astype(dtype),), "mean")

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        try:
            out = self.data.reshape(shape)
        except ValueError as exc:
            raise ShapeMismatch(str(exc)) from None
        return Tensor._make(out, (self,), lambda g: (g.reshape(old),), "reshape")

    def __getitem__(self, idx):
        shape = self.shape
        dtype = self.data.dtype

        def back(g):
            full = np.zeros(shape, dtype=dtype)
            np.add.at(full, idx, g)
            return (full,)

        return Tensor._make(self.data[idx], (self,), back, "index")


def as_tensor(value, dtype=None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    arr = np.asarray(value, dtype=dtype if dtype is not None else DEFAULT_DTYPE)
    return Tensor(arr)
