"""Float64 tensors with tape-based reverse-mode differentiation.

Operations on tensors are recorded on the innermost active :class:`Tape` when
at least one input is tracked (a parameter with ``requires_grad`` or an
earlier node of the same tape). Outside a tape, operations are plain numpy.

    with Tape() as tape:
        loss = (theta * theta).sum()
        grads = tape.backward(loss, [theta])
"""

import math

import numpy as np

from ..errors import GraphError, NumericError, ShapeError

_TAPES = []


def _check_finite(data, what):
    # NaN and inf propagate through a sum; one reduction is cheaper than isfinite()
    if not math.isfinite(np.add.reduce(data, axis=None)):
        if not np.isfinite(data).all():
            raise NumericError(f"non-finite values produced by {what}")


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "_parents", "_backward", "_tape")

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, name or "tensor construction")
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None
        self._tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __len__(self):
        return len(self.data)

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

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Records differentiable operations for one backward pass."""

    def __init__(self):
        self.nodes = []
        self.active = False

    def __enter__(self):
        self.active = True
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.remove(self)
        self.active = False
        return False

    def clear(self):
        for node in self.nodes:
            node._parents = ()
            node._backward = None
            node._tape = None
        self.nodes = []

    def tracks(self, t):
        return isinstance(t, Tensor) and (t.requires_grad or t._tape is self)

    def backward(self, loss, params):
        """Gradients of scalar ``loss`` for each tensor in ``params``.

        Parameters the loss does not depend on get zero gradients. The tape is
        cleared afterwards.
        """
        if not isinstance(loss, Tensor) or loss.size != 1:
            raise GraphError("backward needs a scalar loss tensor")
        if loss._tape is not self:
            raise GraphError("loss is not recorded on this tape (detached graph)")
        grads = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not self.tracks(parent):
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        out = []
        for p in params:
            g = grads.get(id(p))
            if g is None:
                g = np.zeros_like(p.data)
            elif g.shape != p.shape:
                g = np.broadcast_to(g, p.shape).copy()
            if not np.isfinite(g).all():
                raise NumericError(f"non-finite gradient for parameter {p.name or '?'}")
            out.append(g)
        self.clear()
        return out


def backward(loss, params):
    """Run the backward pass on the tape that recorded ``loss``."""
    tape = getattr(loss, "_tape", None)
    if tape is None:
        raise GraphError("loss is not recorded on an active tape (detached graph)")
    return tape.backward(loss, params)


def _active_tape(inputs):
    if not _TAPES:
        return None
    tape = _TAPES[-1]
    for t in inputs:
        if tape.tracks(t):
            return tape
    return None


def _make(data, inputs, backward_fn, what):
    _check_finite(data, what)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = False
    out.name = None
    out._parents = ()
    out._backward = None
    out._tape = None
    tape = _active_tape(inputs)
    if tape is not None:
        out._parents = tuple(inputs)
        out._backward = backward_fn
        out._tape = tape
        tape.nodes.append(out)
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
                 "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = ad / bd

    def bw(g):
        return (_unbroadcast(g / bd, ad.shape), _unbroadcast(-g * ad / (bd * bd), bd.shape))

    return _make(out, (a, b), bw, "div")


def neg(a):
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim != 2 or bd.ndim != 2 or ad.shape[1] != bd.shape[0]:
        if not (ad.ndim == 1 and bd.ndim == 2 and ad.shape[0] == bd.shape[0]):
            raise ShapeError(f"matmul shapes {ad.shape} and {bd.shape} do not align")

    need_a = a.requires_grad or a._tape is not None
    need_b = b.requires_grad or b._tape is not None

    def bw(g):
        if ad.ndim == 1:
            return (g @ bd.T if need_a else None), (np.outer(ad, g) if need_b else None)
        return (g @ bd.T if need_a else None), (ad.T @ g if need_b else None)

    return _make(ad @ bd, (a, b), bw, "matmul")


def tanh(a):
    y = np.tanh(a.data)
    return _make(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def sigmoid(a):
    y = 0.5 * (np.tanh(0.5 * a.data) + 1.0)
    return _make(y, (a,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def exp(a):
    with np.errstate(over="ignore"):
        y = np.exp(a.data)
    return _make(y, (a,), lambda g: (g * y,), "exp")


def log(a):
    x = a.data
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(x)
    return _make(y, (a,), lambda g: (g / x,), "log")


def sqrt(a):
    with np.errstate(invalid="ignore"):
        y = np.sqrt(a.data)

    def bw(g):
        with np.errstate(divide="ignore"):
            return (g * 0.5 / y,)

    return _make(y, (a,), bw, "sqrt")


def square(a):
    x = a.data
    return _make(x * x, (a,), lambda g: (2.0 * g * x,), "square")


def relu(a):
    x = a.data
    keep = x > 0
    return _make(np.where(keep, x, 0.0), (a,), lambda g: (g * keep,), "relu")


def tsum(a, axis=None):
    shape = a.shape

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _make(np.asarray(a.data.sum(axis=axis)), (a,), bw, "sum")


def mean(a, axis=None):
    n = a.size if axis is None else a.shape[axis]
    return tsum(a, axis) * (1.0 / n)


def reshape(a, shape):
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a, axes=None):
    inv = None if axes is None else np.argsort(axes)
    return _make(np.transpose(a.data, axes), (a,),
                 lambda g: (np.transpose(g, inv),), "transpose")


def broadcast_to(a, shape):
    old = a.shape
    return _make(np.broadcast_to(a.data, shape).copy(), (a,),
                 lambda g: (_unbroadcast(g, old),), "broadcast_to")


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw,
                 "concat")


def _is_basic(index):
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, np.integer, slice)) or p is None or p is Ellipsis
               for p in parts)


def getitem(a, index):
    shape = a.shape
    basic = _is_basic(index)

    def bw(g):
        out = np.zeros(shape)
        if basic:
            # no repeated targets, plain assignment is enough
            out[index] = g
        else:
            np.add.at(out, index, g)
        return (out,)

    return _make(np.array(a.data[index]), (a,), bw, "getitem")


def take_rows(a, idx):
    """Rows of a 2-D tensor in the order given by ``idx`` (repeats allowed)."""
    idx = np.asarray(idx)
    shape = a.shape

    def bw(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _make(a.data[idx], (a,), bw, "take_rows")


def time_permute(a, perm):
    """Permute the leading (time) axis independently per batch column.

    ``perm[t, b]`` gives the source time index for output ``(t, b)``; each
    column of ``perm`` must be a permutation.
    """
    perm = np.asarray(perm)
    cols = np.broadcast_to(np.arange(perm.shape[1]), perm.shape)

    def bw(g):
        out = np.empty_like(g)
        out[perm, cols] = g
        return (out,)

    return _make(a.data[perm, cols], (a,), bw, "time_permute")


def log_softmax(a, axis=-1):
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse
    p = np.exp(y)
    return _make(y, (a,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),), "log_softmax")


def cross_entropy_sum(logits, targets, weights=None):
    """Sum over rows of ``-log softmax(logits)[row, target]``.

    ``weights`` (one per row, usually a 0/1 validity mask) scale each term.
    """
    x = logits.data
    targets = np.asarray(targets, dtype=np.int64)
    if x.ndim != 2 or targets.shape != (x.shape[0],):
        raise ShapeError(f"cross_entropy_sum expects [n, V] logits and [n] targets, got "
                         f"{x.shape} and {targets.shape}")
    if (targets < 0).any() or (targets >= x.shape[1]).any():
        raise ShapeError("target id outside the output vocabulary")
    w = np.ones(x.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    shifted = x - x.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(x.shape[0])
    nll = lse - shifted[rows, targets]
    total = np.asarray(float((w * nll).sum()))

    def bw(g):
        p = np.exp(shifted - lse[:, None])
        p[rows, targets] -= 1.0
        return (g * w[:, None] * p,)

    return _make(total, (logits,), bw, "cross_entropy_sum")
