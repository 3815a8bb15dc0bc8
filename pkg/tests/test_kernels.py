import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from _helpers import rng
from mmshift import _kernels_py as py
from mmshift import kernels

cy = pytest.importorskip("mmshift._kernels")


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")
    assert kernels.BACKEND == "cython"


@given(st.integers(1, 64), st.integers(0, 100_000), st.floats(1e-3, 10.0))
def test_lhs_parity(d, seed, lam):
    g = rng(seed)
    sqrt_t = g.uniform(0, 3, d)
    inv_s = g.uniform(0.1, 5, d)
    a = py.waterfill_lhs(lam, sqrt_t, inv_s, 0.3)
    b = cy.waterfill_lhs(lam, sqrt_t, inv_s, 0.3)
    assert b == pytest.approx(a, rel=1e-13, abs=1e-300)


@given(st.integers(1, 64), st.integers(0, 100_000), st.floats(1e-4, 1e3))
def test_bisect_parity(d, seed, r2):
    g = rng(seed)
    sqrt_t = g.uniform(0.01, 3, d)
    inv_s = g.uniform(0.1, 5, d)
    la, ia = py.waterfill_bisect(sqrt_t, inv_s, 0.05, r2)
    lb, ib = cy.waterfill_bisect(sqrt_t, inv_s, 0.05, r2)
    assert lb == pytest.approx(la, rel=1e-12)
    assert abs(ia - ib) <= 2


@given(st.integers(1, 6), st.integers(1, 300), st.integers(0, 100_000))
def test_argmax_parity(d, m, seed):
    g = rng(seed)
    gm = g.standard_normal((d, d))
    hm = g.standard_normal((d, d))
    w = g.standard_normal((m, d))
    va, ia = py.norm_sum_argmax(gm, hm, 1.3, 0.4, w, block=7)
    vb, ib = cy.norm_sum_argmax(gm, hm, 1.3, 0.4, w, block=7)
    assert vb == pytest.approx(va, rel=1e-12)
    assert ia == ib
    brute = 1.3 * np.linalg.norm(w @ gm, axis=1) + 0.4 * np.linalg.norm(w @ hm, axis=1)
    assert va == pytest.approx(brute.max(), rel=1e-12)


def test_argmax_ties_take_lowest_index():
    w = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    for mod in (py, cy):
        _, i = mod.norm_sum_argmax(np.eye(2), np.eye(2), 1.0, 1.0, w)
        assert i == 0
