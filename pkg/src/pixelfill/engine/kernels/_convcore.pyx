# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled convolution kernels.

Same contracts as kernels.fallback, including offset skipping. Flat-pointer
loops with the output channel innermost; these beat the GEMM fallback on
low-channel-count shapes (first layers, tiny sampling batches) where BLAS
call and temporary-allocation overhead dominates. The dispatcher in
kernels/__init__ picks per call based on the benchmark crossover.
"""

import numpy as np

cimport cython

ctypedef fused floating:
    float
    double


cdef void _corr2d(const floating* x, const floating* w, floating* out,
                  const unsigned char* skip,
                  Py_ssize_t B, Py_ssize_t H, Py_ssize_t W, Py_ssize_t Ci,
                  Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t Co,
                  Py_ssize_t Ho, Py_ssize_t Wo, Py_ssize_t sh, Py_ssize_t sw) noexcept nogil:
    cdef Py_ssize_t b, ho, wo, i, j, ci, co
    cdef const floating* xrow
    cdef const floating* wrow
    cdef floating* orow
    cdef floating xv
    for b in range(B):
        for ho in range(Ho):
            for wo in range(Wo):
                orow = out + ((b * Ho + ho) * Wo + wo) * Co
                for i in range(kh):
                    for j in range(kw):
                        if skip != NULL and skip[i * kw + j]:
                            continue
                        xrow = x + (((b * H + ho * sh + i) * W) + wo * sw + j) * Ci
                        wrow = w + (i * kw + j) * Ci * Co
                        for ci in range(Ci):
                            xv = xrow[ci]
                            for co in range(Co):
                                orow[co] += xv * wrow[ci * Co + co]


cdef void _grad_input(const floating* g, const floating* wt, floating* gx,
                      const unsigned char* skip,
                      Py_ssize_t B, Py_ssize_t H, Py_ssize_t W, Py_ssize_t Ci,
                      Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t Co,
                      Py_ssize_t Ho, Py_ssize_t Wo, Py_ssize_t sh, Py_ssize_t sw) noexcept nogil:
    # wt is pre-transposed to [kh, kw, Co, Ci] so the ci accumulation is contiguous
    cdef Py_ssize_t b, ho, wo, i, j, ci, co
    cdef const floating* grow
    cdef const floating* wrow
    cdef floating* xrow
    cdef floating gv
    for b in range(B):
        for ho in range(Ho):
            for wo in range(Wo):
                grow = g + ((b * Ho + ho) * Wo + wo) * Co
                for i in range(kh):
                    for j in range(kw):
                        if skip != NULL and skip[i * kw + j]:
                            continue
                        xrow = gx + (((b * H + ho * sh + i) * W) + wo * sw + j) * Ci
                        wrow = wt + (i * kw + j) * Ci * Co
                        for co in range(Co):
                            gv = grow[co]
                            for ci in range(Ci):
                                xrow[ci] += gv * wrow[co * Ci + ci]


cdef void _grad_weights(const floating* x, const floating* g, floating* gw,
                        const unsigned char* skip,
                        Py_ssize_t B, Py_ssize_t H, Py_ssize_t W, Py_ssize_t Ci,
                        Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t Co,
                        Py_ssize_t Ho, Py_ssize_t Wo, Py_ssize_t sh, Py_ssize_t sw) noexcept nogil:
    cdef Py_ssize_t b, ho, wo, i, j, ci, co
    cdef const floating* xrow
    cdef const floating* grow
    cdef floating* wrow
    cdef floating xv
    for b in range(B):
        for ho in range(Ho):
            for wo in range(Wo):
                grow = g + ((b * Ho + ho) * Wo + wo) * Co
                for i in range(kh):
                    for j in range(kw):
                        if skip != NULL and skip[i * kw + j]:
                            continue
                        xrow = x + (((b * H + ho * sh + i) * W) + wo * sw + j) * Ci
                        wrow = gw + (i * kw + j) * Ci * Co
                        for ci in range(Ci):
                            xv = xrow[ci]
                            for co in range(Co):
                                wrow[ci * Co + co] += xv * grow[co]


def corr2d(floating[:, :, :, ::1] x, floating[:, :, :, ::1] w, int sh, int sw, skip=None):
    cdef Py_ssize_t B = x.shape[0], H = x.shape[1], W = x.shape[2], Ci = x.shape[3]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], Co = w.shape[3]
    cdef Py_ssize_t Ho = (H - kh) // sh + 1
    cdef Py_ssize_t Wo = (W - kw) // sw + 1
    out_np = np.zeros((B, Ho, Wo, Co), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, :, :, ::1] out = out_np
    cdef unsigned char[::1] sk
    cdef const unsigned char* skp = NULL
    if skip is not None:
        sk = np.ascontiguousarray(np.asarray(skip, dtype=np.uint8)).reshape(-1)
        skp = &sk[0]
    with nogil:
        _corr2d(&x[0, 0, 0, 0], &w[0, 0, 0, 0], &out[0, 0, 0, 0], skp,
                B, H, W, Ci, kh, kw, Co, Ho, Wo, sh, sw)
    return out_np


def corr2d_grad_input(floating[:, :, :, ::1] g, floating[:, :, :, ::1] w,
                      int sh, int sw, Py_ssize_t H, Py_ssize_t W, skip=None):
    cdef Py_ssize_t B = g.shape[0], Ho = g.shape[1], Wo = g.shape[2], Co = g.shape[3]
    cdef Py_ssize_t kh = w.shape[0], kw = w.shape[1], Ci = w.shape[2]
    gx_np = np.zeros((B, H, W, Ci), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, :, :, ::1] gx = gx_np
    wt_np = np.ascontiguousarray(np.asarray(w).transpose(0, 1, 3, 2))
    cdef floating[:, :, :, ::1] wt = wt_np
    cdef unsigned char[::1] sk
    cdef const unsigned char* skp = NULL
    if skip is not None:
        sk = np.ascontiguousarray(np.asarray(skip, dtype=np.uint8)).reshape(-1)
        skp = &sk[0]
    with nogil:
        _grad_input(&g[0, 0, 0, 0], &wt[0, 0, 0, 0], &gx[0, 0, 0, 0], skp,
                    B, H, W, Ci, kh, kw, Co, Ho, Wo, sh, sw)
    return gx_np


def corr2d_grad_weights(floating[:, :, :, ::1] x, floating[:, :, :, ::1] g,
                        int sh, int sw, Py_ssize_t kh, Py_ssize_t kw, skip=None):
    cdef Py_ssize_t B = x.shape[0], H = x.shape[1], W = x.shape[2], Ci = x.shape[3]
    cdef Py_ssize_t Ho = g.shape[1], Wo = g.shape[2], Co = g.shape[3]
    gw_np = np.zeros((kh, kw, Ci, Co), dtype=np.float32 if floating is float else np.float64)
    cdef floating[:, :, :, ::1] gw = gw_np
    cdef unsigned char[::1] sk
    cdef const unsigned char* skp = NULL
    if skip is not None:
        sk = np.ascontiguousarray(np.asarray(skip, dtype=np.uint8)).reshape(-1)
        skp = &sk[0]
    with nogil:
        _grad_weights(&x[0, 0, 0, 0], &g[0, 0, 0, 0], &gw[0, 0, 0, 0], skp,
                      B, H, W, Ci, kh, kw, Co, Ho, Wo, sh, sw)
    return gw_np
