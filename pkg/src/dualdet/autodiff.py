"""Reverse-mode automatic differentiation over float64 numpy arrays.

A Tensor wraps an ndarray and records the operations that produced it.
``backward()`` walks the graph in reverse topological order and accumulates
gradients into every reachable tensor with ``requires_grad=True``. All
computation is dense float64; there is no device or dtype story.
"""
from __future__ import annotations

import numpy as np

# When enabled, every op asserts its output is finite. Cheap insurance for
# tests; off by default so training loops keep their speed.
FINITE_CHECKS = False


def _as_array(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    return arr


def _sum_to_shape(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcasted gradient back to the original operand shape."""
    if grad.shape == shape:
        return grad
    # sum over leading axes added by broadcasting
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    # sum over broadcast (size-1) axes
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Dense float64 array with optional gradient tracking.

    ``data`` is always a row-major float64 ndarray; ``grad`` (populated by
    ``backward``) has the same shape. Tensors created by operations hold
    references to their parents so the graph can be replayed in reverse.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _from_op(data: np.ndarray, parents: tuple["Tensor", ...], backward) -> "Tensor":
        if FINITE_CHECKS and not np.all(np.isfinite(data)):
            raise FloatingPointError("non-finite value produced by an operation")
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- graph traversal ------------------------------------------------------

    def _toposort(self) -> list["Tensor"]:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
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

    def backward(self) -> None:
        """Accumulate d(self)/d(x) into ``x.grad`` for every reachable x."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")
        order = self._toposort()
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg
        del grads

    def zero_graph_grads(self) -> None:
        for node in self._toposort():
            node.grad = None

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        a, b = self, other
        return Tensor._from_op(
            a.data + b.data, (a, b),
            lambda g: (_sum_to_shape(g, a.shape), _sum_to_shape(g, b.shape)))

    __radd__ = __add__

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        a, b = self, other
        return Tensor._from_op(
            a.data - b.data, (a, b),
            lambda g: (_sum_to_shape(g, a.shape), _sum_to_shape(-g, b.shape)))

    def __rsub__(self, other):
        return Tensor(other) - self

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        a, b = self, other
        return Tensor._from_op(
            a.data * b.data, (a, b),
            lambda g: (_sum_to_shape(g * b.data, a.shape),
                       _sum_to_shape(g * a.data, b.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        a, b = self, other
        return Tensor._from_op(
            a.data / b.data, (a, b),
            lambda g: (_sum_to_shape(g / b.data, a.shape),
                       _sum_to_shape(-g * a.data / (b.data * b.data), b.shape)))

    def __rtruediv__(self, other):
        return Tensor(other) / self

    def __neg__(self):
        a = self
        return Tensor._from_op(-a.data, (a,), lambda g: (-g,))

    def __pow__(self, p: float):
        a = self
        pf = float(p)
        return Tensor._from_op(
            a.data ** pf, (a,),
            lambda g: (g * pf * a.data ** (pf - 1.0),))

    def __matmul__(self, other):
        a, b = self, other
        return Tensor._from_op(
            a.data @ b.data, (a, b),
            lambda g: (g @ b.data.T, a.data.T @ g))

    # -- shape ops ------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        old = a.shape
        return Tensor._from_op(
            a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        a = self
        inv = tuple(np.argsort(axes))
        return Tensor._from_op(
            np.ascontiguousarray(a.data.transpose(axes)), (a,),
            lambda g: (g.transpose(inv),))

    def __getitem__(self, key):
        a = self
        out_data = a.data[key]
        if np.isscalar(out_data) or out_data.ndim == 0:
            out_data = np.asarray(out_data, dtype=np.float64)

        def bw(g):
            gx = np.zeros_like(a.data)
            np.add.at(gx, key, g)
            return (gx,)

        return Tensor._from_op(np.array(out_data, copy=True), (a,), bw)

    def sum(self, axis=None, keepdims: bool = False):
        a = self
        out = a.data.sum(axis=axis, keepdims=keepdims)

        def bw(g):
            if axis is None:
                return (np.broadcast_to(g, a.shape).copy(),)
            g2 = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(g2, a.shape).copy(),)

        return Tensor._from_op(np.asarray(out, dtype=np.float64), (a,), bw)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.size if axis is None else (
            np.prod([self.shape[i] for i in (axis if isinstance(axis, tuple) else (axis,))]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))


# -- free functions -----------------------------------------------------------


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    parents = tuple(tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return Tensor._from_op(
        np.concatenate([t.data for t in tensors], axis=axis), parents, bw)


def stack(tensors: list[Tensor], axis: int = 0) -> Tensor:
    parents = tuple(tensors)

    def bw(g):
        pieces = np.split(g, len(parents), axis=axis)
        return tuple(np.squeeze(p, axis=axis) for p in pieces)

    return Tensor._from_op(
        np.stack([t.data for t in tensors], axis=axis), parents, bw)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor._from_op(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return Tensor._from_op(np.log(x.data), (x,), lambda g: (g / x.data,))


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return Tensor._from_op(out, (x,), lambda g: (g * 0.5 / np.maximum(out, 1e-300),))


def absolute(x: Tensor) -> Tensor:
    # subgradient 0 at x == 0
    return Tensor._from_op(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def relu(x: Tensor) -> Tensor:
    return Tensor._from_op(
        np.maximum(x.data, 0.0), (x,), lambda g: (g * (x.data > 0.0),))


def sigmoid(x: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-x.data))
    return Tensor._from_op(out, (x,), lambda g: (g * out * (1.0 - out),))


def maximum(a: Tensor, b: Tensor) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = b if isinstance(b, Tensor) else Tensor(b)
    mask = a.data >= b.data  # ties route to the first argument

    def bw(g):
        return (_sum_to_shape(g * mask, a.shape), _sum_to_shape(g * ~mask, b.shape))

    return Tensor._from_op(np.maximum(a.data, b.data), (a, b), bw)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = b if isinstance(b, Tensor) else Tensor(b)
    mask = a.data <= b.data

    def bw(g):
        return (_sum_to_shape(g * mask, a.shape), _sum_to_shape(g * ~mask, b.shape))

    return Tensor._from_op(np.minimum(a.data, b.data), (a, b), bw)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; the gradient passes only where no clamping happened."""
    inside = (x.data >= lo) & (x.data <= hi)
    return Tensor._from_op(
        np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return Tensor._from_op(out, (x,), bw)


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matmul over the leading axis: (B,n,m) @ (B,m,p) -> (B,n,p)."""
    return Tensor._from_op(
        a.data @ b.data, (a, b),
        lambda g: (g @ b.data.swapaxes(-1, -2), a.data.swapaxes(-1, -2) @ g))


def grad_of(loss: Tensor, param: Tensor) -> np.ndarray:
    """d(loss)/d(param), recomputed from a clean graph on every call."""
    if loss.data.size != 1:
        raise ValueError("loss must be a scalar")
    reachable = loss._toposort()
    if not any(node is param for node in reachable):
        raise ValueError("param is not part of the loss graph")
    for node in reachable:
        node.grad = None
    loss.backward()
    if param.grad is None:
        raise ValueError("param did not receive a gradient")
    return param.grad.copy()


def finite_diff_check(f, x: Tensor, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps a Tensor to a scalar Tensor. The relative error denominator is
    max(|analytic|, |numeric|, 1e-8) per element; the max over elements is
    returned.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x.requires_grad = True
    analytic = grad_of(f(x), x)
    numeric = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    nflat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(Tensor(x.data, requires_grad=False)).item()
        flat[i] = orig - h
        fm = f(Tensor(x.data, requires_grad=False)).item()
        flat[i] = orig
        nflat[i] = (fp - fm) / (2.0 * h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
