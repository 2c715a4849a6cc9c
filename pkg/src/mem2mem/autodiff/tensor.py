"""Dense tensors with reverse-mode differentiation.

Every differentiable op records its parents and a closure mapping the output
gradient to parent gradients. Shapes must agree exactly; the only implicit
broadcast allowed is a 0-d scalar against a tensor. Any other broadcast goes
through :func:`expand`, so each gradient reduction is spelled out.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class GraphError(RuntimeError):
    pass


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference paths)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._consumed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    # operator sugar
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

    def __getitem__(self, idx):
        return getitem(self, idx)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data: np.ndarray, parents: Iterable[Tensor], backward) -> Tensor:
    parents = tuple(parents)
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _is_scalar(t: Tensor) -> bool:
    return t.data.ndim == 0


def _binary_operands(op: str, a, b) -> tuple[Tensor, Tensor]:
    a_t = isinstance(a, Tensor)
    b_t = isinstance(b, Tensor)
    a = a if a_t else as_tensor(a, like=b if b_t else None)
    b = b if b_t else as_tensor(b, like=a)
    if a.shape != b.shape and not (_is_scalar(a) or _is_scalar(b)):
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")
    return a, b


def _unscalar(g: np.ndarray, t: Tensor) -> np.ndarray:
    if _is_scalar(t) and g.ndim:
        return np.asarray(g.sum(), dtype=t.dtype)
    return g


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _binary_operands("add", a, b)
    return _make(a.data + b.data, (a, b), lambda g: (_unscalar(g, a), _unscalar(g, b)))


def sub(a, b) -> Tensor:
    a, b = _binary_operands("sub", a, b)
    return _make(a.data - b.data, (a, b), lambda g: (_unscalar(g, a), _unscalar(-g, b)))


def mul(a, b) -> Tensor:
    a, b = _binary_operands("mul", a, b)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b), lambda g: (_unscalar(g * bd, a), _unscalar(g * ad, b)))


def div(a, b) -> Tensor:
    a, b = _binary_operands("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd
    return _make(out, (a, b), lambda g: (_unscalar(g / bd, a), _unscalar(-g * out / bd, b)))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    y = np.empty_like(xd)
    pos = xd >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    y[~pos] = ex / (1.0 + ex)
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return _make(y, (x,), lambda g: (g * y,))


def log(x: Tensor, floor: float | None = None) -> Tensor:
    """Natural log; with ``floor`` the input is clamped from below first and
    clamped entries receive zero gradient."""
    xd = x.data
    if floor is not None:
        clamped = xd < floor
        xd = np.where(clamped, floor, xd).astype(x.dtype)

        def backward(g):
            return (np.where(clamped, 0.0, g / xd).astype(x.dtype),)
    else:

        def backward(g):
            return (g / xd,)

    return _make(np.log(xd), (x,), backward)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    a, b = _binary_operands("minimum", a, b)
    take_a = a.data <= b.data
    return _make(
        np.minimum(a.data, b.data),
        (a, b),
        lambda g: (_unscalar(g * take_a, a), _unscalar(g * ~take_a, b)),
    )


def mask_fill(x: Tensor, mask, value: float) -> Tensor:
    """Replace entries where ``mask`` is True with a constant."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape:
        raise ShapeError(f"mask_fill: shape mismatch {x.shape} vs {mask.shape}")
    return _make(np.where(mask, value, x.data).astype(x.dtype), (x,), lambda g: (np.where(mask, 0.0, g),))


# ---------------------------------------------------------------- reductions


def sum(x: Tensor, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape = x.shape

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(np.asarray(x.data.sum(axis=axis)), (x,), backward)


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.data.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return mul(sum(x, axis), 1.0 / n)


def frobenius_norm_sq(x: Tensor, axes=(-2, -1)) -> Tensor:
    """Sum of squared entries over ``axes`` (the trailing matrix by default)."""
    xd = x.data
    if xd.ndim < 2:
        raise ShapeError(f"frobenius_norm_sq: need a matrix, got shape {x.shape}")
    out = np.asarray((xd * xd).sum(axis=axes))

    def backward(g):
        g = np.expand_dims(g, axes)
        return (2.0 * g * xd,)

    return _make(out, (x,), backward)


def l2_norm(x: Tensor, axis: int = -1) -> Tensor:
    """Euclidean norm along ``axis``. The gradient at an exact zero vector is
    taken as zero."""
    xd = x.data
    n = np.sqrt((xd * xd).sum(axis=axis))

    def backward(g):
        den = np.expand_dims(n, axis)
        safe = np.where(den > 0, den, 1.0)
        return (np.where(den > 0, np.expand_dims(g, axis) * xd / safe, 0.0).astype(x.dtype),)

    return _make(n, (x,), backward)


# ---------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product.

    Supported forms: ``(..., n, k) @ (k, m)`` (a shared weight applied over
    leading axes) and ``(B, n, k) @ (B, k, m)`` (batched, equal batch sizes).
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim not in (2, 3) or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shape mismatch {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data
    if b.ndim == 3:
        if a.ndim != 3 or a.shape[0] != b.shape[0]:
            raise ShapeError(f"matmul: shape mismatch {a.shape} vs {b.shape}")

        def backward(g):
            return g @ bd.transpose(0, 2, 1), ad.transpose(0, 2, 1) @ g

        return _make(ad @ bd, (a, b), backward)

    if a.ndim == 1:
        raise ShapeError(f"matmul: shape mismatch {a.shape} vs {b.shape}")

    def backward(g):
        ga = g @ bd.T
        a2 = ad.reshape(-1, ad.shape[-1])
        gb = a2.T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _make(ad @ bd, (a, b), backward)


def transpose(x: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(range(x.ndim))[::-1]
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def expand(x: Tensor, shape) -> Tensor:
    """Explicit broadcast of size-1 axes of ``x`` to ``shape`` (same rank)."""
    shape = tuple(shape)
    if x.ndim != len(shape) or any(s != t and s != 1 for s, t in zip(x.shape, shape)):
        raise ShapeError(f"expand: cannot expand {x.shape} to {shape}")
    axes = tuple(i for i, (s, t) in enumerate(zip(x.shape, shape)) if s == 1 and t != 1)

    def backward(g):
        return (g.sum(axis=axes, keepdims=True) if axes else g,)

    return _make(np.broadcast_to(x.data, shape), (x,), backward)


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    ax = axis % xs[0].ndim
    for x in xs[1:]:
        if x.ndim != xs[0].ndim or any(
            s != t for i, (s, t) in enumerate(zip(x.shape, xs[0].shape)) if i != ax
        ):
            raise ShapeError(f"concat: shape mismatch {xs[0].shape} vs {x.shape}")
    splits = np.cumsum([x.shape[ax] for x in xs])[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=ax))

    return _make(np.concatenate([x.data for x in xs], axis=ax), xs, backward)


def stack(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    for x in xs[1:]:
        if x.shape != xs[0].shape:
            raise ShapeError(f"stack: shape mismatch {xs[0].shape} vs {x.shape}")
    n = len(xs)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(n))

    return _make(np.stack([x.data for x in xs], axis=axis), xs, backward)


def getitem(x: Tensor, idx) -> Tensor:
    """Basic (slice/int) indexing."""
    shape, dtype = x.shape, x.dtype

    def backward(g):
        out = np.zeros(shape, dtype=dtype)
        out[idx] = g
        return (out,)

    return _make(x.data[idx], (x,), backward)


def take(x: Tensor, indices, axis: int = 0) -> Tensor:
    """Gather along ``axis`` with an integer index array; repeated indices
    accumulate in the backward pass. Embedding lookup is ``take(table, ids)``."""
    indices = np.asarray(indices, dtype=np.int64)
    shape, dtype = x.shape, x.dtype
    ax = axis % x.ndim

    def backward(g):
        out = np.zeros(shape, dtype=dtype)
        moved = np.moveaxis(out, ax, 0)
        gm = np.moveaxis(g, list(range(ax, ax + indices.ndim)), list(range(indices.ndim)))
        np.add.at(moved, indices, gm)
        return (out,)

    return _make(np.take(x.data, indices, axis=ax), (x,), backward)


def embedding(table: Tensor, ids) -> Tensor:
    return take(table, ids, axis=0)


def pick(x: Tensor, indices) -> Tensor:
    """``out[..., ] = x[..., indices[...]]`` along the last axis."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.shape != x.shape[:-1]:
        raise ShapeError(f"pick: shape mismatch {x.shape} vs {indices.shape}")
    shape, dtype = x.shape, x.dtype
    idx = indices[..., None]

    def backward(g):
        out = np.zeros(shape, dtype=dtype)
        np.put_along_axis(out, idx, g[..., None], axis=-1)
        return (out,)

    return _make(np.take_along_axis(x.data, idx, axis=-1)[..., 0], (x,), backward)


def scatter_add(src: Tensor, indices, size: int) -> Tensor:
    """For 2-d ``src`` (B, N) and ids (B, N): out (B, size) with
    ``out[b, ids[b, i]] += src[b, i]``."""
    indices = np.asarray(indices, dtype=np.int64)
    if src.ndim != 2 or indices.shape != src.shape:
        raise ShapeError(f"scatter_add: shape mismatch {src.shape} vs {indices.shape}")
    if indices.size and (indices.min() < 0 or indices.max() >= size):
        raise ShapeError(f"scatter_add: index out of range for size {size}")
    B = src.shape[0]
    flat = (np.arange(B)[:, None] * size + indices).ravel()
    out = np.bincount(flat, weights=src.data.ravel(), minlength=B * size)
    out = out.reshape(B, size).astype(src.dtype)

    def backward(g):
        return (g.reshape(-1)[flat].reshape(src.shape),)

    return _make(out, (src,), backward)


def softmax(x: Tensor, mask=None) -> Tensor:
    """Softmax over the last axis. ``mask`` (bool, same shape) marks the
    entries that take part; the rest get probability zero."""
    xd = x.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ShapeError(f"softmax: shape mismatch {x.shape} vs {mask.shape}")
        if not mask.any(axis=-1).all():
            raise ValueError("softmax: a row is entirely masked")
        xd = np.where(mask, xd, -np.inf)
    shift = xd.max(axis=-1, keepdims=True)
    e = np.exp(xd - shift)
    y = (e / e.sum(axis=-1, keepdims=True)).astype(x.dtype)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _make(y, (x,), backward)


# ---------------------------------------------------------------- backward


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf.

    The graph is released afterwards; a second call on the same loss raises.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    if loss._consumed:
        raise GraphError("backward: graph already consumed; re-run the forward pass")
    if not loss.requires_grad:
        loss._consumed = True
        return
    order = _topological(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if node._backward is None:
            if g is not None:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        if g is None:
            continue
        pgrads = node._backward(g)
        for p, pg in zip(node._parents, pgrads):
            if pg is None or not p.requires_grad:
                continue
            pg = np.asarray(pg, dtype=p.dtype)
            if pg.shape != p.shape:
                pg = pg.reshape(p.shape)
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    for node in order:
        node._parents = ()
        node._backward = None
    loss._consumed = True


def grad(loss: Tensor, params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    """Gradients of a scalar ``loss`` for each named parameter.

    Parameters not reachable from ``loss`` get zeros.
    """
    for p in params.values():
        p.grad = None
    backward(loss)
    return {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}
