"""Selects the compiled kernels when available, else the numpy fallback.

Set ``MMSHIFT_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

BACKEND = "python"

if os.environ.get("MMSHIFT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._kernels import norm_sum_argmax, waterfill_bisect, waterfill_lhs  # noqa: F401

        BACKEND = "cython"
    except ImportError:
        pass

if BACKEND == "python":
    from ._kernels_py import norm_sum_argmax, waterfill_bisect, waterfill_lhs  # noqa: F401

__all__ = ["BACKEND", "norm_sum_argmax", "waterfill_bisect", "waterfill_lhs"]
