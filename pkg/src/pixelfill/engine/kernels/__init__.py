"""Kernel backend selection.

Two interchangeable backends: a compiled Cython core and a numpy (BLAS)
fallback. Benchmarks on this codebase (see benchmarks/bench_kernels.py)
show the compiled loops win on low-channel-count shapes where GEMM call
and temporary-allocation overhead dominates, while BLAS wins once the
channel dimensions are wide; the default "auto" mode picks per call at
that measured crossover.

Environment overrides: PIXELFILL_PURE=1 forces the fallback everywhere
(reference semantics), PIXELFILL_COMPILED=1 forces the compiled core.
"""

import os

import numpy as np

from . import fallback

try:
    from . import _convcore
except ImportError:  # pragma: no cover - depends on build environment
    _convcore = None

HAVE_COMPILED = _convcore is not None

if os.environ.get("PIXELFILL_PURE") == "1" or _convcore is None:
    BACKEND = "fallback"
elif os.environ.get("PIXELFILL_COMPILED") == "1":
    BACKEND = "compiled"
else:
    BACKEND = "auto"

# measured crossover: direct loops beat per-offset GEMM only when the
# contracted channel dimension is narrow
_SMALL_CI = 8


def _c(a):
    return np.ascontiguousarray(a)


def _pick(ci):
    if BACKEND == "fallback":
        return fallback
    if BACKEND == "compiled":
        return _convcore
    return _convcore if ci <= _SMALL_CI else fallback


def corr2d(x, w, sh, sw, skip=None):
    impl = _pick(w.shape[2])
    return np.asarray(impl.corr2d(_c(x), _c(w), sh, sw, skip))


def corr2d_grad_input(g, w, sh, sw, H, W, skip=None):
    # the scatter kernel's inner loop contracts over Cin; the compiled form
    # never beats the GEMM fallback here, so auto mode always routes to it
    impl = fallback if BACKEND == "auto" else _pick(w.shape[2])
    return np.asarray(impl.corr2d_grad_input(_c(g), _c(w), sh, sw, H, W, skip))


def corr2d_grad_weights(x, g, sh, sw, kh, kw, skip=None):
    impl = _pick(x.shape[3])
    return np.asarray(impl.corr2d_grad_weights(_c(x), _c(g), sh, sw, kh, kw, skip))


def get_backends():
    """(name, module) pairs of every available backend, for benchmarks."""
    found = [("fallback", fallback)]
    if _convcore is not None:
        found.append(("compiled", _convcore))
    return found
