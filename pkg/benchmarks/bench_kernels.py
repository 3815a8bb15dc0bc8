"""Compare the compiled kernels with the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``. Each kernel is timed on
the same inputs under both backends and the results are checked to agree.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from mmshift import _kernels_py as py
from mmshift.riskeval import sphere_grid

try:
    from mmshift import _kernels as cy
except ImportError:
    cy = None


def _cases(seed: int):
    g = np.random.default_rng(seed)
    out = []
    for d in (16, 256, 4096):
        sqrt_t = g.uniform(0.01, 3.0, d)
        inv_s = g.uniform(0.1, 5.0, d)
        out.append((f"waterfill_bisect d={d}", "waterfill_bisect", (sqrt_t, inv_s, 1e-3, 2.0)))
    for d, res in ((2, 4000), (3, 200), (4, 40)):
        w = sphere_grid(d, res)
        gm, hm = g.standard_normal((2, d, d))
        out.append((f"norm_sum_argmax d={d} rows={w.shape[0]}", "norm_sum_argmax", (gm, hm, 1.0, 0.5, w)))
    return out


def _best(fn, args, repeat: int) -> float:
    timer = timeit.Timer(lambda: fn(*args))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if cy is None:
        print("compiled kernels not built; only the numpy fallback is timed")
    print(f"{'case':<40} {'python [us]':>12} {'cython [us]':>12} {'speedup':>8}")
    for label, name, inputs in _cases(args.seed):
        t_py = _best(getattr(py, name), inputs, args.repeat)
        if cy is None:
            print(f"{label:<40} {t_py * 1e6:12.1f} {'-':>12} {'-':>8}")
            continue
        a, b = getattr(py, name)(*inputs), getattr(cy, name)(*inputs)
        if not np.isclose(a[0], b[0], rtol=1e-10):
            raise SystemExit(f"{label}: backends disagree ({a} vs {b})")
        t_cy = _best(getattr(cy, name), inputs, args.repeat)
        print(f"{label:<40} {t_py * 1e6:12.1f} {t_cy * 1e6:12.1f} {t_py / t_cy:8.1f}x")


if __name__ == "__main__":
    main()
