"""Reverse-mode gradients over array-valued computation graphs.

The engine covers exactly the primitives the trainer composes: affine maps,
elementwise tanh/exp/cos/sin/sqrt, products, sums, Euclidean row norms, and
concatenation. Forward functions written against these ops run unchanged on
plain numpy arrays (no taping) or on `Tensor` nodes (taped), so the same code
serves fast rollouts and gradient steps.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """One node of the computation graph; `value` is always an ndarray."""

    # Keep numpy from elementwise-applying ufuncs over Tensor objects, so
    # ndarray (op) Tensor falls through to our reflected dunders.
    __array_ufunc__ = None

    __slots__ = ("value", "grad", "_parents", "_backward")

    def __init__(self, value, parents=(), backward=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(other, mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def backward(self):
        """Backpropagate from a scalar output through the recorded graph."""
        if self.value.size != 1:
            raise ValueError("backward() expects a scalar output")
        topo, visited, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.value)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _is_tensor(x) -> bool:
    return isinstance(x, Tensor)


def _accumulate(node: Tensor, g: np.ndarray) -> None:
    node.grad = g if node.grad is None else node.grad + g


def value_of(x):
    return x.value if _is_tensor(x) else np.asarray(x, dtype=float)


def add(a, b):
    if not (_is_tensor(a) or _is_tensor(b)):
        return np.add(a, b)
    av, bv = value_of(a), value_of(b)
    out_val = av + bv

    def backward(g):
        if _is_tensor(a):
            _accumulate(a, _unbroadcast(g, av.shape))
        if _is_tensor(b):
            _accumulate(b, _unbroadcast(g, bv.shape))

    return Tensor(out_val, tuple(x for x in (a, b) if _is_tensor(x)), backward)


def mul(a, b):
    if not (_is_tensor(a) or _is_tensor(b)):
        return np.multiply(a, b)
    av, bv = value_of(a), value_of(b)
    out_val = av * bv

    def backward(g):
        if _is_tensor(a):
            _accumulate(a, _unbroadcast(g * bv, av.shape))
        if _is_tensor(b):
            _accumulate(b, _unbroadcast(g * av, bv.shape))

    return Tensor(out_val, tuple(x for x in (a, b) if _is_tensor(x)), backward)


def matmul(a, b):
    """a @ b for a of shape (n,) or (batch, n) and b of shape (n, m)."""
    if not (_is_tensor(a) or _is_tensor(b)):
        return np.asarray(a) @ np.asarray(b)
    av, bv = value_of(a), value_of(b)
    out_val = av @ bv

    def backward(g):
        if _is_tensor(a):
            _accumulate(a, g @ bv.T)
        if _is_tensor(b):
            if av.ndim == 1:
                _accumulate(b, np.outer(av, g))
            else:
                _accumulate(b, av.T @ g)

    return Tensor(out_val, tuple(x for x in (a, b) if _is_tensor(x)), backward)


def _unary(x, fn, dfn):
    if not _is_tensor(x):
        return fn(np.asarray(x, dtype=float))
    out_val = fn(x.value)

    def backward(g, out_val=out_val):
        _accumulate(x, g * dfn(x.value, out_val))

    return Tensor(out_val, (x,), backward)


def tanh(x):
    return _unary(x, np.tanh, lambda v, o: 1.0 - o * o)


def exp(x):
    return _unary(x, np.exp, lambda v, o: o)


def cos(x):
    return _unary(x, np.cos, lambda v, o: -np.sin(v))


def sin(x):
    return _unary(x, np.sin, lambda v, o: np.cos(v))


def sqrt(x):
    return _unary(x, np.sqrt, lambda v, o: 0.5 / o)


def square(x):
    return _unary(x, np.square, lambda v, o: 2.0 * v)


def total(x):
    """Sum of all entries, as a scalar."""
    if not _is_tensor(x):
        return np.sum(x)

    def backward(g):
        _accumulate(x, np.broadcast_to(g, x.value.shape).copy())

    return Tensor(np.sum(x.value), (x,), backward)


def mean(x):
    if not _is_tensor(x):
        return np.mean(x)
    n = value_of(x).size

    def backward(g):
        _accumulate(x, np.broadcast_to(g / n, x.value.shape).copy())

    return Tensor(np.mean(x.value), (x,), backward)


def norm_rows(x):
    """Euclidean norm along the last axis, keepdims.

    At an exactly-zero row the norm is not differentiable; the subgradient 0
    is used and a RuntimeWarning is emitted so callers can exclude the point.
    """
    xv = value_of(x)
    out_val = np.sqrt(np.sum(xv * xv, axis=-1, keepdims=True))
    if not _is_tensor(x):
        return out_val
    zero_rows = out_val == 0.0

    def backward(g):
        if zero_rows.any():
            warnings.warn(
                "euclidean norm at zero: subgradient 0 used", RuntimeWarning, stacklevel=2
            )
        safe = np.where(zero_rows, 1.0, out_val)
        _accumulate(x, np.where(zero_rows, 0.0, g / safe) * xv)

    return Tensor(out_val, (x,), backward)


def concat(parts, axis=-1):
    if not any(_is_tensor(p) for p in parts):
        return np.concatenate(parts, axis=axis)
    values = [value_of(p) for p in parts]
    out_val = np.concatenate(values, axis=axis)
    sizes = [v.shape[axis] for v in values]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if _is_tensor(p):
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                _accumulate(p, g[tuple(index)])

    return Tensor(out_val, tuple(p for p in parts if _is_tensor(p)), backward)


class ParamVector:
    """Flat parameter storage with a name -> (offset, shape) index.

    Named entries are non-overlapping reshaped views into one flat array, so
    optimizers can update `data` in place and every consumer of `get(name)`
    sees the new values.
    """

    def __init__(self, arrays: dict):
        self._index: dict[str, tuple[int, tuple]] = {}
        offset = 0
        chunks = []
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype=float)
            self._index[name] = (offset, arr.shape)
            chunks.append(arr.ravel())
            offset += arr.size
        self.data = np.concatenate(chunks) if chunks else np.zeros(0)

    @property
    def size(self) -> int:
        return self.data.size

    def names(self):
        return self._index.keys()

    def get(self, name: str) -> np.ndarray:
        offset, shape = self._index[name]
        return self.data[offset : offset + int(np.prod(shape, dtype=int))].reshape(shape)

    def arrays(self) -> dict:
        return {name: self.get(name) for name in self._index}

    def copy(self) -> "ParamVector":
        out = ParamVector({})
        out._index = dict(self._index)
        out.data = self.data.copy()
        return out

    def with_data(self, flat: np.ndarray) -> "ParamVector":
        if flat.shape != self.data.shape:
            raise ValueError("flat data size mismatch")
        out = ParamVector({})
        out._index = dict(self._index)
        out.data = np.asarray(flat, dtype=float)
        return out

    def coord_name(self, flat_index: int) -> tuple[str, int]:
        for name, (offset, shape) in self._index.items():
            size = int(np.prod(shape, dtype=int))
            if offset <= flat_index < offset + size:
                return name, flat_index - offset
        raise IndexError(flat_index)


def _scalar(out) -> float:
    return float(value_of(out))


def value_and_grad(scalar_fn, at: ParamVector) -> tuple:
    """Forward value and exact reverse-mode gradient in one pass.

    scalar_fn receives a dict name -> Tensor and must return a scalar node
    composed of the ops in this module.
    """
    leaves = {name: Tensor(at.get(name)) for name in at.names()}
    out = scalar_fn(leaves)
    if not _is_tensor(out):
        raise TypeError("scalar_fn must return a Tensor; got a plain value")
    out.backward()
    grads = {
        name: (leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value))
        for name, leaf in leaves.items()
    }
    return float(out.value), ParamVector(grads)


def grad(scalar_fn, at: ParamVector) -> ParamVector:
    """Exact reverse-mode gradient of scalar_fn at the given parameters."""
    return value_and_grad(scalar_fn, at)[1]


@dataclass
class FdReport:
    """Per-coordinate comparison of reverse-mode and central differences."""

    max_rel_err: float
    n_coords: int
    tol: float
    failures: list = field(default_factory=list)  # (name, local index, analytic, fd, rel)
    flagged_zero_norm: bool = False

    @property
    def ok(self) -> bool:
        return not self.failures


def fd_check(scalar_fn, at: ParamVector, h: float = 1e-5, tol: float = 1e-4) -> FdReport:
    """Central-difference check of grad() on every coordinate.

    Relative error uses |a - f| / max(|a|, |f|, 1e-8) so coordinates with a
    true zero gradient compare against an absolute floor.
    """
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        analytic = grad(scalar_fn, at)
        flagged = any("norm at zero" in str(w.message) for w in caught)
    base = at.data.copy()
    report = FdReport(max_rel_err=0.0, n_coords=at.size, tol=tol, flagged_zero_norm=flagged)
    work = base.copy()
    for i in range(at.size):
        work[i] = base[i] + h
        hi = _scalar(scalar_fn(at.with_data(work).arrays()))
        work[i] = base[i] - h
        lo = _scalar(scalar_fn(at.with_data(work).arrays()))
        work[i] = base[i]
        fd = (hi - lo) / (2.0 * h)
        a = analytic.data[i]
        rel = abs(a - fd) / max(abs(a), abs(fd), 1e-8)
        if rel > report.max_rel_err:
            report.max_rel_err = rel
        if rel > tol:
            report.failures.append((*at.coord_name(i), a, fd, rel))
    return report
