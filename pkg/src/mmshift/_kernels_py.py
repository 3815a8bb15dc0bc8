"""Pure Python/numpy versions of the compiled kernels in ``_kernels.pyx``.

Both modules expose the same functions with the same signatures and are
checked against each other in the test suite.
"""
from __future__ import annotations

import numpy as np


def waterfill_lhs(lam: float, sqrt_t: np.ndarray, inv_s: np.ndarray, scale: float) -> float:
    """``scale * sum_i inv_s[i] * (sqrt_t[i] / lam - 1)_+``."""
    gap = sqrt_t / lam - 1.0
    return float(scale * np.sum(inv_s[gap > 0] * gap[gap > 0]))


def waterfill_bisect(
    sqrt_t: np.ndarray, inv_s: np.ndarray, scale: float, r2: float, max_iter: int = 200
) -> tuple[float, int]:
    """Bisection for the water level on ``(0, max(sqrt_t)]``.

    Returns the bracket midpoint after convergence and the iteration count.
    """
    hi = float(np.max(sqrt_t))
    lo = 0.0
    it = 0
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if waterfill_lhs(mid, sqrt_t, inv_s, scale) > r2:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), it


def norm_sum_argmax(
    g: np.ndarray, h: np.ndarray, a: float, b: float, w: np.ndarray, block: int = 4096
) -> tuple[float, int]:
    """Maximize ``a ||g^T w_i|| + b ||h^T w_i||`` over the rows ``w_i`` of ``w``.

    Returns the maximum and the maximizing row index (lowest on ties).
    """
    best, bi = -np.inf, 0
    for start in range(0, w.shape[0], block):
        rows = w[start:start + block]
        vals = a * np.linalg.norm(rows @ g, axis=1) + b * np.linalg.norm(rows @ h, axis=1)
        k = int(np.argmax(vals))
        if vals[k] > best:
            best, bi = float(vals[k]), start + k
    return best, bi
