"""Pure-numpy convolution kernels (one GEMM per kernel offset).

All three routines see pre-padded inputs; padding policy lives one level up.
Shapes follow the NHWC / [kh, kw, Cin, Cout] layout used everywhere else.
skip, when given, is a [kh, kw] bool array of kernel offsets whose taps are
entirely masked out (autoregressive masks zero whole rows); those offsets
contribute exact zeros and are not computed.
"""

import numpy as np


def corr2d(x, w, sh, sw, skip=None):
    """Valid cross-correlation with stride. x: [B,H,W,Ci], w: [kh,kw,Ci,Co]."""
    B, H, W, Ci = x.shape
    kh, kw, _, Co = w.shape
    Ho = (H - kh) // sh + 1
    Wo = (W - kw) // sw + 1
    out = np.zeros((B, Ho, Wo, Co), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            if skip is not None and skip[i, j]:
                continue
            patch = x[:, i : i + sh * Ho : sh, j : j + sw * Wo : sw, :]
            prod = np.ascontiguousarray(patch).reshape(-1, Ci) @ w[i, j]
            out += prod.reshape(B, Ho, Wo, Co)
    return out


def corr2d_grad_input(g, w, sh, sw, H, W, skip=None):
    """Scatter output-grads back onto a (padded) input canvas of H x W."""
    B, Ho, Wo, Co = g.shape
    kh, kw, Ci, _ = w.shape
    gx = np.zeros((B, H, W, Ci), dtype=g.dtype)
    gm = np.ascontiguousarray(g).reshape(-1, Co)
    for i in range(kh):
        for j in range(kw):
            if skip is not None and skip[i, j]:
                continue
            contrib = (gm @ w[i, j].T).reshape(B, Ho, Wo, Ci)
            gx[:, i : i + sh * Ho : sh, j : j + sw * Wo : sw, :] += contrib
    return gx


def corr2d_grad_weights(x, g, sh, sw, kh, kw, skip=None):
    B, H, W, Ci = x.shape
    _, Ho, Wo, Co = g.shape
    gw = np.zeros((kh, kw, Ci, Co), dtype=x.dtype)
    gm = np.ascontiguousarray(g).reshape(-1, Co)
    for i in range(kh):
        for j in range(kw):
            if skip is not None and skip[i, j]:
                continue
            patch = x[:, i : i + sh * Ho : sh, j : j + sw * Wo : sw, :]
            gw[i, j] = np.ascontiguousarray(patch).reshape(-1, Ci).T @ gm
    return gw
