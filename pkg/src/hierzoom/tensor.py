"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every operation that touches a tensor with ``requires_grad`` records its
inputs and a backward closure on the output. :func:`backward` orders the
recorded operations topologically (the tape), replays them in reverse once
each, and then discards the tape.

Only the operations the zoom-graph models need are provided. Broadcasting
is supported for the elementwise arithmetic operators only.
"""

import contextlib
import contextvars

import numpy as np

from . import kernels as _k
from .errors import ConfigurationError, DimensionError, UsageError

BCE_EPS = 1e-7

_grad_enabled = contextvars.ContextVar("hierzoom_grad_enabled", default=True)


@contextlib.contextmanager
def no_grad():
    """Run forward passes without recording anything on a tape."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled():
    return _grad_enabled.get()


class Tensor:
    """An n-dimensional float64 array with an optional gradient buffer.

    Leaf tensors created with ``requires_grad=True`` get a zero gradient
    buffer immediately; intermediate results receive theirs during
    :func:`backward`.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._parents = ()
        self._backward = None
        self.op = "leaf"

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
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, op={self.op}{flag})"

    def __len__(self):
        return len(self.data)

    # arithmetic
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

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self):
        backward(self)


def _not_scalar(t):
    raise UsageError(f"item() needs a single-element tensor, got shape {t.shape}")


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward_fn, op):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    out._parents = ()
    out._backward = None
    out.requires_grad = False
    if _grad_enabled.get() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------- the tape


def build_tape(loss):
    """Operations reachable from ``loss`` in topological order (inputs first)."""
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, finished = stack.pop()
        if finished:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent._backward is not None and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss):
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor requiring grad."""
    if loss.data.size != 1:
        raise UsageError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise UsageError("loss does not depend on any tensor that requires grad")
    if loss._backward is None:
        loss.grad = loss.grad + 1.0 if loss.grad is not None else np.ones_like(loss.data)
        return
    tape = build_tape(loss)
    pending = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            pg = _unbroadcast(pg, parent.data.shape)
            if parent._backward is None:
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad += pg
            elif id(parent) in pending:
                pending[id(parent)] = pending[id(parent)] + pg
            else:
                pending[id(parent)] = pg
    for node in tape:
        node._parents = ()
        node._backward = None


# ---------------------------------------------------------- elementwise ops


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _result(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _result(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _result(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def exp(x):
    out = np.exp(x.data)
    return _result(out, (x,), lambda g: (g * out,), "exp")


def log(x):
    xd = x.data
    return _result(np.log(xd), (x,), lambda g: (g / xd,), "log")


def leaky_relu(x, alpha):
    """``x`` where positive, ``alpha * x`` otherwise; slope 1 is used at 0."""
    if not 0.0 <= alpha < 1.0:
        raise ConfigurationError(f"leaky_relu alpha must lie in [0, 1), got {alpha}")
    slope = np.where(x.data >= 0.0, 1.0, alpha)
    out = np.where(x.data > 0.0, x.data, alpha * x.data)
    return _result(out, (x,), lambda g: (g * slope,), "leaky_relu")


def relu(x):
    return leaky_relu(x, 0.0)


def elu(x, alpha=1.0):
    pos = x.data > 0.0
    neg_part = alpha * np.expm1(np.minimum(x.data, 0.0))
    out = np.where(pos, x.data, neg_part)
    slope = np.where(pos, 1.0, neg_part + alpha)
    return _result(out, (x,), lambda g: (g * slope,), "elu")


# ----------------------------------------------------------- shape & reduce


def tsum(x, axis=None, keepdims=False):
    shape = x.data.shape
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _result(np.asarray(out, dtype=np.float64), (x,), bw, "sum")


def mean(x, axis=None, keepdims=False):
    count = x.data.size if axis is None else np.prod([x.data.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x, shape):
    orig = x.data.shape
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(orig),), "reshape")


def take(x, index):
    """Basic or advanced indexing; gradients scatter-add back."""
    shape = x.data.shape

    def bw(g):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        return (full,)

    return _result(np.array(x.data[index], dtype=np.float64), (x,), bw, "take")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return _result(out, tensors, lambda g: tuple(np.split(g, splits, axis=axis)), "concat")


# ------------------------------------------------------------ linear algebra


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data

    def bw(g):
        ga = g @ bd.T if a.requires_grad else None
        gb = ad.T @ g if b.requires_grad else None
        return ga, gb

    return _result(ad @ bd, (a, b), bw, "matmul")


def softmax_rows(x, mask=None):
    """Row-wise softmax of a 2-D tensor.

    Entries where ``mask`` is False are excluded: they come out as exactly
    zero and receive no gradient. Each row must keep at least one entry.
    """
    if x.ndim != 2:
        raise DimensionError(f"softmax_rows needs a 2-D tensor, got shape {x.shape}")
    z = x.data if mask is None else np.where(mask, x.data, -np.inf)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)
    return _result(s, (x,), lambda g: (s * (g - (g * s).sum(axis=1, keepdims=True)),), "softmax")


def binary_cross_entropy(p, y, pos_weight=1.0):
    """Mean negated Bernoulli log-likelihood with ``p`` clamped to [eps, 1 - eps].

    ``pos_weight`` scales the terms of positive targets.
    """
    p = as_tensor(p)
    yd = np.asarray(y.data if isinstance(y, Tensor) else y, dtype=np.float64)
    if yd.shape != p.data.shape:
        raise DimensionError(f"binary_cross_entropy shape mismatch: {p.shape} vs {yd.shape}")
    n = p.data.size
    wy = pos_weight * yd
    pc = np.clip(p.data, BCE_EPS, 1.0 - BCE_EPS)
    inside = (p.data >= BCE_EPS) & (p.data <= 1.0 - BCE_EPS)
    loss = -np.sum(wy * np.log(pc) + (1.0 - yd) * np.log1p(-pc)) / n

    def bw(g):
        return (g * inside * (-(wy / pc) + (1.0 - yd) / (1.0 - pc)) / n,)

    return _result(np.asarray(loss), (p,), bw, "bce")


# -------------------------------------------------------- convolution & pool


def conv2d(x, weight, bias, stride=1, padding=0):
    """Cross-correlation of ``C x H x W`` (or batched ``N x C x H x W``) input.

    ``weight`` is ``F x C x k x k`` and ``bias`` has ``F`` entries. Zero
    padding is applied on all four sides.
    """
    if stride < 1 or padding < 0:
        raise ConfigurationError(f"invalid stride={stride} / padding={padding}")
    single = x.ndim == 3
    if x.ndim not in (3, 4):
        raise DimensionError(f"conv2d input must be 3-D or 4-D, got shape {x.shape}")
    xd = x.data[None] if single else x.data
    n, c, h, w = xd.shape
    if weight.ndim != 4 or weight.shape[1] != c or weight.shape[2] != weight.shape[3]:
        raise DimensionError(f"conv2d kernel shape {weight.shape} incompatible with input {x.shape}")
    f, _, k, _ = weight.shape
    if bias.shape != (f,):
        raise DimensionError(f"conv2d bias shape {bias.shape} does not match {f} filters")
    hp, wp = h + 2 * padding, w + 2 * padding
    if k > hp or k > wp:
        raise ConfigurationError(f"kernel {k} larger than padded input {hp}x{wp}")
    if (hp - k) % stride or (wp - k) % stride:
        raise ConfigurationError(
            f"non-integral output extent: ({hp}-{k})/{stride}, ({wp}-{k})/{stride}"
        )
    oh, ow = (hp - k) // stride + 1, (wp - k) // stride + 1
    if padding:
        xpad = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xpad = np.ascontiguousarray(xd)
    cols = _k.im2col(xpad, k, stride, oh, ow)
    wmat = weight.data.reshape(f, -1)
    out = (cols @ wmat.T + bias.data).reshape(n, oh, ow, f).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)
    if single:
        out = out[0]

    def bw(g):
        g4 = g[None] if single else g
        gmat = g4.transpose(0, 2, 3, 1).reshape(-1, f)
        gx = None
        if x.requires_grad:
            dcols = np.ascontiguousarray(gmat @ wmat)
            dpad = _k.col2im(dcols, n, c, hp, wp, k, stride, oh, ow)
            gx = dpad[:, :, padding : padding + h, padding : padding + w]
            gx = gx[0] if single else np.ascontiguousarray(gx)
        gw = (gmat.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gb = gmat.sum(axis=0) if bias.requires_grad else None
        return gx, gw, gb

    return _result(out, (x, weight, bias), bw, "conv2d")


def maxpool2d(x, window):
    """Non-overlapping max pooling; ties route gradient to the first maximum."""
    if window < 1:
        raise ConfigurationError(f"pool window must be positive, got {window}")
    single = x.ndim == 3
    if x.ndim not in (3, 4):
        raise DimensionError(f"maxpool2d input must be 3-D or 4-D, got shape {x.shape}")
    xd = x.data[None] if single else x.data
    h, w = xd.shape[2:]
    if h % window or w % window:
        raise ConfigurationError(f"extent {h}x{w} not divisible by pool window {window}")
    out, arg = _k.maxpool_forward(np.ascontiguousarray(xd), window)

    def bw(g):
        g4 = np.ascontiguousarray(g[None] if single else g)
        gx = _k.maxpool_backward(g4, arg, window)
        return (gx[0] if single else gx,)

    return _result(out[0] if single else out, (x,), bw, "maxpool2d")
