"""Differentiable primitives.

Exactly the op set the networks need, nothing speculative. Each op builds a
Node whose _backward closure accumulates into gradient-requiring parents;
broadcasting is undone by summing over the broadcast axes.
"""

import numpy as np
from scipy.special import expit

from .node import EngineError, Node, as_node, constant


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _coerce_pair(a, b):
    if isinstance(a, Node):
        b = as_node(b, dtype=a.dtype if np.isscalar(b) else None)
    elif isinstance(b, Node):
        a = as_node(a, dtype=b.dtype if np.isscalar(a) else None)
    else:
        a, b = as_node(a), as_node(b)
    return a, b


def add(a, b):
    a, b = _coerce_pair(a, b)
    out = Node(a.value + b.value, (a, b), "add")
    if out.requires_grad:
        def bw(g):
            if a.requires_grad:
                a.accumulate(_unbroadcast(g, a.value.shape))
            if b.requires_grad:
                b.accumulate(_unbroadcast(g, b.value.shape))
        out._backward = bw
    return out


def sub(a, b):
    a, b = _coerce_pair(a, b)
    out = Node(a.value - b.value, (a, b), "sub")
    if out.requires_grad:
        def bw(g):
            if a.requires_grad:
                a.accumulate(_unbroadcast(g, a.value.shape))
            if b.requires_grad:
                b.accumulate(_unbroadcast(-g, b.value.shape))
        out._backward = bw
    return out


def mul(a, b):
    a, b = _coerce_pair(a, b)
    out = Node(a.value * b.value, (a, b), "mul")
    if out.requires_grad:
        def bw(g):
            if a.requires_grad:
                a.accumulate(_unbroadcast(g * b.value, a.value.shape))
            if b.requires_grad:
                b.accumulate(_unbroadcast(g * a.value, b.value.shape))
        out._backward = bw
    return out


def div(a, b):
    a, b = _coerce_pair(a, b)
    out = Node(a.value / b.value, (a, b), "div")
    if out.requires_grad:
        def bw(g):
            if a.requires_grad:
                a.accumulate(_unbroadcast(g / b.value, a.value.shape))
            if b.requires_grad:
                b.accumulate(_unbroadcast(-g * a.value / (b.value * b.value), b.value.shape))
        out._backward = bw
    return out


def neg(a):
    a = as_node(a)
    out = Node(-a.value, (a,), "neg")
    if out.requires_grad:
        out._backward = lambda g: a.accumulate(-g)
    return out


def pow_scalar(a, p):
    a = as_node(a)
    p = float(p)
    out = Node(a.value ** p, (a,), "pow")
    if out.requires_grad:
        def bw(g):
            a.accumulate(g * p * a.value ** (p - 1.0))
        out._backward = bw
    return out


def exp(a):
    a = as_node(a)
    out = Node(np.exp(a.value), (a,), "exp")
    if out.requires_grad:
        out._backward = lambda g: a.accumulate(g * out.value)
    return out


def log(a):
    a = as_node(a)
    out = Node(np.log(a.value), (a,), "log")
    if out.requires_grad:
        out._backward = lambda g: a.accumulate(g / a.value)
    return out


def sqrt(a):
    a = as_node(a)
    out = Node(np.sqrt(a.value), (a,), "sqrt")
    if out.requires_grad:
        out._backward = lambda g: a.accumulate(g * 0.5 / out.value)
    return out


def tanh(a):
    a = as_node(a)
    out = Node(np.tanh(a.value), (a,), "tanh")
    if out.requires_grad:
        out._backward = lambda g: a.accumulate(g * (1.0 - out.value * out.value))
    return out


def sigmoid(a):
    a = as_node(a)
    out = Node(expit(a.value), (a,), "sigmoid")
    if out.requires_grad:
        out._backward = lambda g: a.accumulate(g * out.value * (1.0 - out.value))
    return out


def softplus(a):
    """log(1 + exp(x)), overflow-safe."""
    a = as_node(a)
    out = Node(np.logaddexp(np.zeros((), dtype=a.dtype), a.value), (a,), "softplus")
    if out.requires_grad:
        out._backward = lambda g: a.accumulate(g * expit(a.value))
    return out


def elu(a):
    """x for x > 0, exp(x) - 1 otherwise."""
    a = as_node(a)
    v = a.value
    out_val = np.where(v > 0, v, np.expm1(np.minimum(v, 0.0)))
    out = Node(out_val, (a,), "elu")
    if out.requires_grad:
        def bw(g):
            a.accumulate(g * np.where(v > 0, np.ones((), dtype=g.dtype), out.value + 1.0))
        out._backward = bw
    return out


def maximum(a, b):
    a, b = _coerce_pair(a, b)
    out = Node(np.maximum(a.value, b.value), (a, b), "maximum")
    if out.requires_grad:
        take_a = a.value >= b.value  # ties route to the first argument
        def bw(g):
            if a.requires_grad:
                a.accumulate(_unbroadcast(g * take_a, a.value.shape))
            if b.requires_grad:
                b.accumulate(_unbroadcast(g * ~take_a, b.value.shape))
        out._backward = bw
    return out


def clip(a, lo, hi):
    """Clamp with pass-through gradient strictly inside [lo, hi]."""
    a = as_node(a)
    out = Node(np.clip(a.value, lo, hi), (a,), "clip")
    if out.requires_grad:
        inside = (a.value >= lo) & (a.value <= hi)
        out._backward = lambda g: a.accumulate(g * inside)
    return out


def where(cond, a, b):
    """Select by a constant boolean array; gradient flows to the taken branch."""
    a, b = _coerce_pair(a, b)
    cond = np.asarray(cond, dtype=bool)
    out = Node(np.where(cond, a.value, b.value), (a, b), "where")
    if out.requires_grad:
        def bw(g):
            if a.requires_grad:
                a.accumulate(_unbroadcast(np.where(cond, g, 0.0), a.value.shape))
            if b.requires_grad:
                b.accumulate(_unbroadcast(np.where(cond, 0.0, g), b.value.shape))
        out._backward = bw
    return out


def _expand_reduced(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        axes = axis if isinstance(axis, tuple) else (axis,)
        axes = tuple(a % len(shape) for a in axes)
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    a = as_node(a)
    out = Node(np.sum(a.value, axis=axis, keepdims=keepdims), (a,), "sum")
    if out.requires_grad:
        def bw(g):
            a.accumulate(_expand_reduced(g, a.value.shape, axis, keepdims).astype(g.dtype))
        out._backward = bw
    return out


def mean(a, axis=None, keepdims=False):
    a = as_node(a)
    out = Node(np.mean(a.value, axis=axis, keepdims=keepdims), (a,), "mean")
    if out.requires_grad:
        count = a.value.size / max(out.value.size, 1)
        def bw(g):
            a.accumulate(_expand_reduced(g / count, a.value.shape, axis, keepdims).astype(g.dtype))
        out._backward = bw
    return out


def reshape(a, shape):
    a = as_node(a)
    out = Node(a.value.reshape(shape), (a,), "reshape")
    if out.requires_grad:
        out._backward = lambda g: a.accumulate(g.reshape(a.value.shape))
    return out


def transpose(a, axes):
    a = as_node(a)
    out = Node(np.transpose(a.value, axes), (a,), "transpose")
    if out.requires_grad:
        inv = np.argsort(axes)
        out._backward = lambda g: a.accumulate(np.transpose(g, inv))
    return out


def getitem(a, idx):
    """Basic (slice/int) indexing only; advanced indexing is not supported."""
    a = as_node(a)
    out = Node(a.value[idx], (a,), "getitem")
    if out.requires_grad:
        def bw(g):
            gx = np.zeros_like(a.value)
            gx[idx] += g
            a.accumulate(gx)
        out._backward = bw
    return out


def concat(nodes, axis=-1):
    nodes = [as_node(n) for n in nodes]
    out = Node(np.concatenate([n.value for n in nodes], axis=axis), tuple(nodes), "concat")
    if out.requires_grad:
        sizes = [n.value.shape[axis] for n in nodes]
        offsets = np.cumsum([0] + sizes)
        def bw(g):
            for n, lo, hi in zip(nodes, offsets[:-1], offsets[1:]):
                if n.requires_grad:
                    sl = [slice(None)] * g.ndim
                    sl[axis] = slice(lo, hi)
                    n.accumulate(g[tuple(sl)])
        out._backward = bw
    return out


def split(a, n, axis=-1):
    """Split into n equal chunks along axis."""
    a = as_node(a)
    size = a.value.shape[axis]
    if size % n:
        raise EngineError(f"split: axis size {size} not divisible by {n}")
    step = size // n
    chunks = []
    for k in range(n):
        sl = [slice(None)] * a.value.ndim
        sl[axis] = slice(k * step, (k + 1) * step)
        chunks.append(getitem(a, tuple(sl)))
    return chunks


def matmul(a, b):
    a, b = _coerce_pair(a, b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise EngineError("matmul supports 2-D operands only")
    if a.value.shape[1] != b.value.shape[0]:
        raise EngineError(
            f"matmul inner dimension mismatch: {a.value.shape[1]} vs {b.value.shape[0]}")
    out = Node(a.value @ b.value, (a, b), "matmul")
    if out.requires_grad:
        def bw(g):
            if a.requires_grad:
                a.accumulate(g @ b.value.T)
            if b.requires_grad:
                b.accumulate(a.value.T @ g)
        out._backward = bw
    return out


def dense(x, w, bias=None):
    """Affine map on [B, Din] inputs."""
    y = matmul(x, w)
    if bias is not None:
        y = add(y, bias)
    return y


def logsumexp(a, axis=-1, keepdims=False):
    a = as_node(a)
    mx = np.max(a.value, axis=axis, keepdims=True)
    shifted = sub(a, constant(mx))
    out = add(log(sum(exp(shifted), axis=axis, keepdims=True)), constant(mx))
    if not keepdims:
        out = reshape(out, np.squeeze(mx, axis=axis).shape)
    return out


def log_softmax(a, axis=-1):
    return sub(a, logsumexp(a, axis=axis, keepdims=True))


def dropout(x, rate, rng, train):
    """Inverted dropout; identity when rate is 0 or in infer mode."""
    if not train or rate == 0.0:
        return x
    x = as_node(x)
    keep = 1.0 - rate
    draw_dtype = x.value.dtype if x.value.dtype in (np.float32, np.float64) else np.float64
    mask = (rng.random(x.value.shape, dtype=draw_dtype) < keep).astype(x.value.dtype) / keep
    return mul(x, constant(mask))


def stop_gradient(a):
    return as_node(a).detach()


def _attach_operators():
    Node.__add__ = lambda self, o: add(self, o)
    Node.__radd__ = lambda self, o: add(o, self)
    Node.__sub__ = lambda self, o: sub(self, o)
    Node.__rsub__ = lambda self, o: sub(o, self)
    Node.__mul__ = lambda self, o: mul(self, o)
    Node.__rmul__ = lambda self, o: mul(o, self)
    Node.__truediv__ = lambda self, o: div(self, o)
    Node.__rtruediv__ = lambda self, o: div(o, self)
    Node.__neg__ = lambda self: neg(self)
    Node.__pow__ = lambda self, p: pow_scalar(self, p)
    Node.__matmul__ = lambda self, o: matmul(self, o)
    Node.__getitem__ = lambda self, idx: getitem(self, idx)


_attach_operators()
