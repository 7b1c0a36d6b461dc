"""Central finite-difference verification of analytic gradients."""

import numpy as np

from .node import EngineError, backward, constant, param


def finite_diff_check(f, x, step=1e-5):
    """Max relative error between analytic and central-difference gradients.

    f maps a Node holding an array shaped like x to a scalar Node. Run at
    64-bit; certification tolerances are meaningless in float32.
    """
    x = np.asarray(x, dtype=np.float64)
    leaf = param(x.copy())
    root = f(leaf)
    if root.value.size != 1:
        raise EngineError("finite_diff_check needs a scalar-valued function")
    if not np.all(np.isfinite(root.value)):
        raise EngineError("finite_diff_check: f(x) is not finite")
    backward(root)
    analytic = np.zeros_like(x) if leaf.grad is None else np.asarray(leaf.grad, dtype=np.float64)

    numeric = np.empty_like(x)
    flat = x.reshape(-1)
    num_flat = numeric.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        fp = float(f(constant(x.copy())).value)
        flat[k] = orig - step
        fm = float(f(constant(x.copy())).value)
        flat[k] = orig
        num_flat[k] = (fp - fm) / (2.0 * step)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
