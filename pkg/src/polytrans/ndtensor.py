"""Dense float64 tensors with a reverse-mode gradient tape.

Every differentiable operation produces a new immutable :class:`Tensor` that
remembers its operands and a closure mapping the output gradient to operand
gradients.  Results are stamped with a monotonically increasing id, so sorting
reachable nodes by id gives a valid topological order for the reverse sweep.

Operations performed while a :class:`Tape` is active are recorded on it (one
tape per thread; a default tape is created lazily).  ``backward`` consumes the
tape: a second reverse pass over the same forward graph raises
:class:`TapeConsumed`.
"""
from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import (
    DomainError,
    NonDeterministicFunction,
    NonFiniteInput,
    NotScalar,
    NumericalOverflow,
    ShapeMismatch,
    TapeConsumed,
)

_ids = itertools.count(1)
_local = threading.local()


class Tape:
    """Ordered record of the operations of one forward pass."""

    def __init__(self):
        self.entries: list[tuple[str, tuple[int, ...], int]] = []
        self.consumed = False

    def record(self, op: str, operand_ids: tuple[int, ...], result_id: int) -> None:
        if self.consumed:
            raise TapeConsumed("cannot record on a tape that has been back-propagated")
        self.entries.append((op, operand_ids, result_id))

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _tape_stack().pop()


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def current_tape() -> Tape:
    stack = _tape_stack()
    if stack:
        return stack[-1]
    default = getattr(_local, "default", None)
    if default is None or default.consumed:
        default = _local.default = Tape()
    return default


def grad_enabled() -> bool:
    return getattr(_local, "grad_enabled", True)


@contextmanager
def no_grad():
    """Evaluate without recording anything on a tape."""
    prev = grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "id", "_parents", "_backward", "_tape", "op", "__weakref__")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.id = next(_ids)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._tape = None
        self.op = "leaf"

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def values(self) -> np.ndarray:
        """Row-major flat copy of the stored values."""
        return self.data.ravel().copy()

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.shape[0]

    def assign(self, new_values) -> None:
        """Replace the values of a leaf (used by optimizers between steps)."""
        if self._parents:
            raise RuntimeError("only leaf tensors can be reassigned")
        arr = np.array(new_values, dtype=np.float64)
        if arr.shape != self.shape:
            raise ShapeMismatch(f"assign {arr.shape} into {self.shape}")
        arr.flags.writeable = False
        self.data = arr

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, index):
        return slice_(self, index)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def tanh(self):
        return tanh(self)


# ---------------------------------------------------------------------------
# construction


def create(shape: Sequence[int], values: Sequence[float], requires_grad: bool = False) -> Tensor:
    shape = tuple(int(s) for s in shape)
    flat = np.asarray(values, dtype=np.float64).ravel()
    if int(np.prod(shape, dtype=np.int64)) != flat.size:
        raise ShapeMismatch(f"shape {shape} needs {int(np.prod(shape))} values, got {flat.size}")
    if not np.isfinite(flat).all():
        raise NonFiniteInput("tensor values must be finite")
    t = Tensor(flat.reshape(shape), requires_grad=requires_grad)
    if requires_grad and grad_enabled():
        current_tape().record("leaf", (), t.id)
    return t


def tensor(data, requires_grad: bool = False) -> Tensor:
    arr = np.asarray(data, dtype=np.float64)
    return create(arr.shape, arr.ravel(), requires_grad)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise NonFiniteInput("tensor values must be finite")
    return Tensor(arr)


def detach(x: Tensor) -> Tensor:
    return Tensor(as_tensor(x).data)


def zeros(shape, requires_grad=False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad)


def ones(shape, requires_grad=False) -> Tensor:
    return Tensor(np.ones(shape), requires_grad)


# ---------------------------------------------------------------------------
# node plumbing


def _finite(out: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(out).all():
        raise NumericalOverflow(f"{op} produced non-finite values")
    return out


def _node(out: np.ndarray, parents: tuple, backward: Callable, op: str) -> Tensor:
    if not isinstance(out, np.ndarray) or out.dtype != np.float64:
        out = np.array(out, dtype=np.float64)
    _finite(out, op)
    t = Tensor.__new__(Tensor)
    out.flags.writeable = False
    t.data = out
    t.id = next(_ids)
    t.op = op
    t._parents = ()
    t._backward = None
    t._tape = None
    t.requires_grad = False
    if grad_enabled() and any(p.requires_grad for p in parents):
        tape = current_tape()
        tape.record(op, tuple(p.id for p in parents), t.id)
        t.requires_grad = True
        t._parents = parents
        t._backward = backward
        t._tape = tape
    return t


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeMismatch(f"cannot broadcast {a.shape} with {b.shape}") from exc


# ---------------------------------------------------------------------------
# elementwise arithmetic (numpy broadcasting; gradients reduced back)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    sa, sb = a.shape, b.shape
    return _node(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    sa, sb = a.shape, b.shape
    return _node(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    ad, bd = a.data, b.data

    def back(g):
        return (
            _unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
            _unbroadcast(g * ad, bd.shape) if b.requires_grad else None,
        )

    return _node(ad * bd, (a, b), back, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    if np.any(b.data == 0):
        raise DomainError("division by zero")
    ad, bd = a.data, b.data
    out = ad / bd

    def back(g):
        return (
            _unbroadcast(g / bd, ad.shape) if a.requires_grad else None,
            _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None,
        )

    return _node(out, (a, b), back, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    p = float(exponent)
    ad = a.data
    if p != int(p) and np.any(ad < 0):
        raise DomainError("fractional power of a negative value")
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        out = ad**p
    return _node(out, (a,), lambda g: (g * p * ad ** (p - 1),), "pow")


def square(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    return _node(ad * ad, (a,), lambda g: (2.0 * g * ad,), "square")


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    if np.any(ad <= 0):
        raise DomainError("log of a nonpositive value")
    return _node(np.log(ad), (a,), lambda g: (g / ad,), "log")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    out = np.empty_like(ad)
    pos = ad >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-ad[pos]))
    e = np.exp(ad[~pos])
    out[~pos] = e / (1.0 + e)
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _node(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def clamp(a, lo: float, hi: float) -> Tensor:
    a = as_tensor(a)
    ad = a.data
    inside = (ad >= lo) & (ad <= hi)
    return _node(np.clip(ad, lo, hi), (a,), lambda g: (g * inside,), "clamp")


# ---------------------------------------------------------------------------
# linear algebra and shape manipulation


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0:
        raise ShapeMismatch("matmul needs at least 1-d operands")
    if a.ndim == 1:
        return reshape(matmul(reshape(a, (1, a.shape[0])), b), b.shape[:-2] + b.shape[-1:])
    if b.ndim == 1:
        return reshape(matmul(a, reshape(b, (b.shape[0], 1))), a.shape[:-1])
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    try:
        out = ad @ bd
    except ValueError as exc:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}") from exc

    def back(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        if b.requires_grad:
            if bd.ndim == 2 and ad.ndim > 2:
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return _node(out, (a, b), back, "matmul")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeMismatch(f"cannot reshape {src} to {shape}") from exc
    return _node(out, (a,), lambda g: (g.reshape(src),), "reshape")


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _node(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),), "transpose")


def swapaxes(a, ax1: int, ax2: int) -> Tensor:
    a = as_tensor(a)
    axes = list(range(a.ndim))
    axes[ax1], axes[ax2] = axes[ax2], axes[ax1]
    return transpose(a, tuple(axes))


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeMismatch("concat of nothing")
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeMismatch(f"concat shapes {[t.shape for t in ts]}") from exc
    splits = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(out, tuple(ts), back, "concat")


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    expanded = []
    for t in ts:
        ax = axis if axis >= 0 else t.ndim + 1 + axis
        expanded.append(reshape(t, t.shape[:ax] + (1,) + t.shape[ax:]))
    return concat(expanded, axis=axis)


def slice_(a, index) -> Tensor:
    a = as_tensor(a)
    src = a.shape
    try:
        out = a.data[index]
    except IndexError as exc:
        raise ShapeMismatch(f"bad index {index!r} for shape {src}") from exc
    out = np.array(out, dtype=np.float64)

    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(p, (int, slice, type(None), type(Ellipsis))) for p in parts)

    def back(g):
        full = np.zeros(src)
        if basic:
            full[index] = g  # basic indexing never repeats an element
        else:
            np.add.at(full, index, g)
        return (full,)

    return _node(out, (a,), back, "slice")


def embedding(table, ids) -> Tensor:
    """Row lookup ``table[ids]`` for an integer array of ids."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeMismatch("embedding table must be 2-d")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeMismatch(f"embedding ids outside [0, {table.shape[0]})")
    vocab, dim = table.shape

    def back(g):
        full = np.zeros((vocab, dim))
        np.add.at(full, ids.ravel(), g.reshape(-1, dim))
        return (full,)

    return _node(table.data[ids], (table,), back, "embedding")


def pick(a, ids) -> Tensor:
    """Gather one entry along the last axis: ``out[..., ] = a[..., ids[...]]``."""
    a = as_tensor(a)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.shape != a.shape[:-1]:
        raise ShapeMismatch(f"pick ids {ids.shape} vs {a.shape}")
    out = np.take_along_axis(a.data, ids[..., None], axis=-1)[..., 0]
    src = a.shape

    def back(g):
        full = np.zeros(src)
        np.put_along_axis(full, ids[..., None], g[..., None], axis=-1)
        return (full,)

    return _node(out, (a,), back, "pick")


def masked_fill(a, mask, value: float) -> Tensor:
    a = as_tensor(a)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    keep = ~mask
    return _node(np.where(mask, float(value), a.data), (a,), lambda g: (g * keep,), "masked_fill")


# ---------------------------------------------------------------------------
# reductions and normalisers


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    src = a.shape
    kept = tuple(1 if i in axes else s for i, s in enumerate(src))

    def back(g):
        return (np.broadcast_to(g.reshape(kept), src),)

    return _node(np.asarray(a.data.sum(axis=axes, keepdims=keepdims)), (a,), back, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    src = a.shape
    count = int(np.prod([src[i] for i in axes])) if axes else 1
    kept = tuple(1 if i in axes else s for i, s in enumerate(src))

    def back(g):
        return (np.broadcast_to(g.reshape(kept) / count, src),)

    return _node(np.asarray(a.data.mean(axis=axes, keepdims=keepdims)), (a,), back, "mean")


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _node(out, (a,), back, "softmax")


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def back(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _node(out, (a,), back, "log_softmax")


def layer_norm(a, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale and shift."""
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gain.data
    n = x.shape[-1]

    def back(g):
        ga = gg = gb = None
        if a.requires_grad:
            gx = g * gd
            ga = inv * (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        if gain.requires_grad:
            gg = (g * xhat).reshape(-1, n).sum(axis=0)
        if bias.requires_grad:
            gb = g.reshape(-1, n).sum(axis=0)
        return ga, gg, gb

    return _node(xhat * gd + bias.data, (a, gain, bias), back, "layer_norm")


# ---------------------------------------------------------------------------
# dispatch by name

OPS: dict[str, Callable] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "pow": power,
    "square": square,
    "matmul": matmul,
    "exp": exp,
    "log": log,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "relu": relu,
    "clamp": clamp,
    "softmax": softmax,
    "log_softmax": log_softmax,
    "sum": sum_,
    "mean": mean,
    "concat": concat,
    "stack": stack,
    "slice": slice_,
    "embedding": embedding,
    "pick": pick,
    "masked_fill": masked_fill,
    "reshape": reshape,
    "transpose": transpose,
    "swapaxes": swapaxes,
    "layer_norm": layer_norm,
}


def apply(op_kind: str, *operands, **kwargs) -> Tensor:
    try:
        fn = OPS[op_kind]
    except KeyError:
        raise ValueError(f"unknown op {op_kind!r}") from None
    return fn(*operands, **kwargs)


# ---------------------------------------------------------------------------
# reverse pass


class GradMap(dict):
    """``{tensor id: gradient array}`` for every grad-requiring tensor reached."""

    def of(self, t: Tensor) -> np.ndarray:
        g = self.get(t.id)
        return np.zeros(t.shape) if g is None else g


def _reachable(root: Tensor) -> list[Tensor]:
    seen = {root.id}
    nodes = [root]
    stack = [root]
    while stack:
        node = stack.pop()
        for p in node._parents:
            if p.requires_grad and p.id not in seen:
                seen.add(p.id)
                nodes.append(p)
                stack.append(p)
    return nodes


def backward(loss: Tensor) -> GradMap:
    if loss.size != 1:
        raise NotScalar(f"loss must be scalar, got shape {loss.shape}")
    grads = GradMap()
    if not loss.requires_grad:
        return grads
    nodes = _reachable(loss)
    tapes = {id(n._tape): n._tape for n in nodes if n._tape is not None}
    if any(t.consumed for t in tapes.values()):
        raise TapeConsumed("backward already ran over this graph; re-run the forward pass")
    nodes.sort(key=lambda n: n.id, reverse=True)
    acc: dict[int, np.ndarray] = {loss.id: np.ones(loss.shape)}
    for node in nodes:
        g = acc.get(node.id)
        if g is None:
            continue
        grads[node.id] = g
        if node._backward is None:
            continue
        for p, pg in zip(node._parents, node._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            prev = acc.get(p.id)
            acc[p.id] = pg if prev is None else prev + pg
    for t in tapes.values():
        t.consumed = True
    for node in nodes:
        node._backward = None
    return grads


def grad_check(f: Callable[[Tensor], Tensor], x, epsilon: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    Error per component is ``|analytic - numeric| / max(1, |analytic|)``.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-7, 1e-3]")
    base = np.array(as_tensor(x).data, dtype=np.float64)
    xt = Tensor(base, requires_grad=True)
    with Tape():
        y = f(xt)
        if y.size != 1:
            raise NotScalar("grad_check needs a scalar-valued function")
        analytic = backward(y).of(xt)
    with no_grad():
        again = f(Tensor(base)).item()
    if again != y.item():
        raise NonDeterministicFunction(f"f(x) gave {y.item()!r} then {again!r}")
    numeric = np.zeros_like(base)
    flat = base.ravel()
    with no_grad():
        for i in range(flat.size):
            plus = flat.copy()
            plus[i] += epsilon
            minus = flat.copy()
            minus[i] -= epsilon
            fp = f(Tensor(plus.reshape(base.shape))).item()
            fm = f(Tensor(minus.reshape(base.shape))).item()
            numeric.ravel()[i] = (fp - fm) / (2 * epsilon)
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    return float(err.max()) if err.size else 0.0


def grad_check_many(f: Callable[..., Tensor], xs: Iterable, epsilon: float = 1e-5) -> float:
    """``grad_check`` over several inputs at once (each perturbed in turn)."""
    xs = [np.array(as_tensor(x).data) for x in xs]
    sizes = [x.size for x in xs]
    shapes = [x.shape for x in xs]
    flat = np.concatenate([x.ravel() for x in xs]) if xs else np.zeros(0)
    bounds = np.cumsum([0] + sizes)

    def unpack(t: Tensor):
        return [reshape(t[int(bounds[i]):int(bounds[i + 1])], shapes[i]) for i in range(len(xs))]

    return grad_check(lambda t: f(*unpack(t)), flat, epsilon)
