"""Strided 2-D convolution and its transpose as graph ops.

Layout is NHWC with weights [kh, kw, Cin, Cout] (transposed weights are
[kh, kw, Cout, Cin]). SAME padding splits evenly with the extra row/column
on the bottom/right; autoregressive masking proofs rely on that placement,
so it is fixed here and nowhere else.
"""

import numpy as np

from . import kernels
from .node import EngineError, Node, as_node
from .ops import add

SAME, VALID = "SAME", "VALID"


def _pads_1d(size, k, stride, padding):
    if padding == SAME:
        out = -(-size // stride)  # ceil
        total = max((out - 1) * stride + k - size, 0)
        lo = total // 2
        return lo, total - lo, out
    if padding == VALID:
        if size < k:
            raise EngineError(f"VALID conv needs input >= kernel, got {size} < {k}")
        return 0, 0, (size - k) // stride + 1
    raise EngineError(f"unknown padding {padding!r}")


def conv_output_shape(h, w, kh, kw, stride, padding):
    _, _, ho = _pads_1d(h, kh, stride, padding)
    _, _, wo = _pads_1d(w, kw, stride, padding)
    return ho, wo


def _check_mask(mask, wshape):
    mask = np.asarray(mask)
    if mask.shape != wshape:
        raise EngineError(f"mask shape {mask.shape} != weight shape {wshape}")
    return mask


def conv2d(x, w, bias=None, stride=1, padding=SAME, mask=None):
    """Cross-correlation; mask (if given) zeroes weight entries and is constant."""
    x, w = as_node(x), as_node(w)
    if x.value.ndim != 4 or w.value.ndim != 4:
        raise EngineError(f"conv2d expects 4-D input/weights, got {x.value.ndim}-D/{w.value.ndim}-D")
    B, H, W, Ci = x.value.shape
    kh, kw, Cw, Co = w.value.shape
    if Ci != Cw:
        raise EngineError(f"conv2d channel mismatch: input Cin={Ci}, weights Cin={Cw}")
    s = int(stride)
    pt, pb, Ho = _pads_1d(H, kh, s, padding)
    pl, pr, Wo = _pads_1d(W, kw, s, padding)

    skip = None
    if mask is None:
        w_eff = w.value
    else:
        mask = _check_mask(mask, w.value.shape).astype(w.value.dtype)
        w_eff = w.value * mask
        skip = ~mask.any(axis=(2, 3))  # whole kernel offsets zeroed by the mask
        if not skip.any():
            skip = None
    xp = x.value
    if pt or pb or pl or pr:
        xp = np.pad(xp, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    out = Node(kernels.corr2d(xp, w_eff, s, s, skip), (x, w), "conv2d")

    if out.requires_grad:
        Hp, Wp = xp.shape[1], xp.shape[2]
        def bw(g):
            if x.requires_grad:
                gxp = kernels.corr2d_grad_input(g, w_eff, s, s, Hp, Wp, skip)
                x.accumulate(gxp[:, pt : pt + H, pl : pl + W, :])
            if w.requires_grad:
                gw = kernels.corr2d_grad_weights(xp, g, s, s, kh, kw, skip)
                if mask is not None:
                    gw = gw * mask
                w.accumulate(gw)
        out._backward = bw

    if bias is not None:
        out = add(out, bias)
    return out


def transposed_conv2d(x, w, bias=None, stride=1, padding=SAME):
    """Gradient-of-conv semantics: output spatial dims invert the matching conv2d."""
    x, w = as_node(x), as_node(w)
    if x.value.ndim != 4 or w.value.ndim != 4:
        raise EngineError("transposed_conv2d expects 4-D input/weights")
    B, H, W, Ci = x.value.shape
    kh, kw, Co, Cw = w.value.shape
    if Ci != Cw:
        raise EngineError(f"transposed_conv2d channel mismatch: input Cin={Ci}, weights Cin={Cw}")
    s = int(stride)
    if padding == SAME:
        Hz, Wz = H * s, W * s
    elif padding == VALID:
        Hz, Wz = (H - 1) * s + kh, (W - 1) * s + kw
    else:
        raise EngineError(f"unknown padding {padding!r}")
    pt, pb, ho = _pads_1d(Hz, kh, s, padding)
    pl, pr, wo = _pads_1d(Wz, kw, s, padding)
    if (ho, wo) != (H, W):
        raise EngineError(f"transposed_conv2d shape inversion failed: {(ho, wo)} != {(H, W)}")
    Hp, Wp = Hz + pt + pb, Wz + pl + pr

    out_padded = kernels.corr2d_grad_input(x.value, w.value, s, s, Hp, Wp)
    out = Node(out_padded[:, pt : pt + Hz, pl : pl + Wz, :], (x, w), "deconv2d")

    if out.requires_grad:
        def bw(g):
            gp = g
            if pt or pb or pl or pr:
                gp = np.pad(g, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
            if x.requires_grad:
                x.accumulate(kernels.corr2d(gp, w.value, s, s))
            if w.requires_grad:
                w.accumulate(kernels.corr2d_grad_weights(gp, x.value, s, s, kh, kw))
        out._backward = bw

    if bias is not None:
        out = add(out, bias)
    return out
