import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _helpers import rand_spd, rng
from mmshift.mmsolve import SpectralProgram, solve_minimax_program
from mmshift.modelshift import ModelShiftEstimator, fit_model_shift, predict
from mmshift.synth import sample_gaussian_design


def _data(g, d, n_s=200, n_t=40, shift=0.0, noise=1.0):
    beta_t = g.standard_normal(d)
    delta = shift * g.standard_normal(d)
    xs = g.standard_normal((n_s, d))
    xt = g.standard_normal((n_t, d))
    ys = xs @ (beta_t + delta) + noise * g.standard_normal(n_s)
    yt = xt @ beta_t + noise * g.standard_normal(n_t)
    return xs, ys, xt, yt


def test_predict_cases():
    d = 3
    bs, bt = np.arange(3.0), np.ones(3)
    est = ModelShiftEstimator(np.eye(d), np.zeros((d, d)), 1.0, 1.0)
    np.testing.assert_array_equal(predict(est, bs, bt), bs)
    est = ModelShiftEstimator(0.5 * np.eye(d), 0.5 * np.eye(d), 1.0, 1.0)
    np.testing.assert_allclose(predict(est, bs, bt), 0.5 * (bs + bt))
    g = rng(0)
    a1, a2 = g.standard_normal((2, d, d))
    u, v = g.standard_normal((2, d))
    est = ModelShiftEstimator(a1, a2, 1.0, 1.0)
    oracle = [sum(a1[i, j] * u[j] + a2[i, j] * v[j] for j in range(d)) for i in range(d)]
    np.testing.assert_allclose(predict(est, u, v), oracle, rtol=1e-12)
    with pytest.raises(ValueError):
        predict(est, np.ones(2), v)
    with pytest.raises(ValueError):
        ModelShiftEstimator(np.full((2, 2), np.nan), np.eye(2), 1.0, 1.0)
    with pytest.raises(ValueError):
        est.beta_hat


def test_symmetric_when_domains_match():
    g = rng(1)
    x = g.standard_normal((100, 3))
    y = g.standard_normal(100)
    est = fit_model_shift(x, y, x, y, np.eye(3), 1.0, 2.0, 0.0, rel_gap=1e-10)
    assert np.abs(est.a1 - est.a2).max() < 1e-4


def test_large_radius_no_shift_is_unbiased():
    g = rng(2)
    xs, ys, xt, yt = _data(g, 3, noise=1e-3)
    est = fit_model_shift(xs, ys, xt, yt, np.eye(3), 1e-3, 1e3, 0.0)
    np.testing.assert_allclose(est.a1 + est.a2, np.eye(3), atol=1e-4)


def test_huge_gamma_matches_target_only_minimax():
    g = rng(3)
    d = 3
    xs, ys, xt, yt = _data(g, d, shift=1.0)
    sigma_t = rand_spd(g, d)
    r = 1.5
    est = fit_model_shift(xs, ys, xt, yt, sigma_t, 1.0, r, 1e5)
    sth = xt.T @ xt / xt.shape[0]
    q2 = np.linalg.inv(sth) / xt.shape[0]
    # with A1 = 0 the relaxed bias is 2 r^2 ||.||_op^2
    ref = solve_minimax_program(SpectralProgram(sigma_t, q2, np.sqrt(2) * r), rel_gap=1e-8)
    ref_beta = ref.coefficient @ est.beta_bar_t
    assert np.linalg.norm(est.beta_hat - ref_beta) < 1e-2 * np.linalg.norm(ref_beta)


@settings(max_examples=8)
@given(st.integers(1, 3), st.integers(0, 10_000))
def test_relaxed_objective_monotone_in_gamma(d, seed):
    g = rng(seed)
    xs, ys, xt, yt = _data(g, d, n_s=60, n_t=20)
    st_ = rand_spd(g, d)
    vals = [fit_model_shift(xs, ys, xt, yt, st_, 1.0, 1.0, gm).report.objective
            for gm in (0.0, 0.1, 0.5, 1.0, 3.0)]
    assert all(b >= a * (1 - 2e-5) for a, b in zip(vals, vals[1:]))


def test_fit_is_deterministic_and_estimates_target():
    g = rng(4)
    d = 4
    beta_t = g.standard_normal(d)
    s = rand_spd(g, d)
    xs = sample_gaussian_design(4000, s, g)
    xt = sample_gaussian_design(1000, s, g)
    ys = xs @ (beta_t + 0.05 * g.standard_normal(d)) + g.standard_normal(4000)
    yt = xt @ beta_t + g.standard_normal(1000)
    a = fit_model_shift(xs, ys, xt, yt, s, 1.0, 3.0, 0.1)
    b = fit_model_shift(xs, ys, xt, yt, s, 1.0, 3.0, 0.1)
    np.testing.assert_array_equal(a.beta_hat, b.beta_hat)
    assert np.linalg.norm(a.beta_hat - beta_t) < 0.15 * np.linalg.norm(beta_t)


def test_fit_rejects_empty_target():
    g = rng(5)
    xs, ys = g.standard_normal((10, 2)), g.standard_normal(10)
    with pytest.raises(ValueError):
        fit_model_shift(xs, ys, np.zeros((0, 2)), np.zeros(0), np.eye(2), 1.0, 1.0, 1.0)
