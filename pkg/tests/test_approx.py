import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _helpers import commuting_pair, rand_spd, rng
from mmshift.approx import (
    AsymptoticCovariance,
    DensityRatioModel,
    WeightVector,
    estimate_m_hat,
    fit_density_ratio,
    gaussian_limit_covariance,
    gaussian_true_ratio,
    minimax_with_approx_error,
    relative_weights,
    weighted_least_squares,
)
from mmshift.covshift import ShiftProblem, minimax_commutative
from mmshift.synth import sample_gaussian_design


def _gauss_pdf(x, s):
    d = s.shape[0]
    return math.exp(-0.5 * x @ np.linalg.solve(s, x)) / math.sqrt((2 * math.pi) ** d * np.linalg.det(s))


# --- weighted least squares ------------------------------------------------


def test_unit_weights_give_ols():
    g = rng(0)
    x, y = g.standard_normal((30, 4)), g.standard_normal(30)
    np.testing.assert_allclose(weighted_least_squares(x, y, np.ones(30)),
                               np.linalg.lstsq(x, y, rcond=None)[0], atol=1e-12)


def test_weight_two_equals_duplication():
    g = rng(1)
    x, y = g.standard_normal((12, 3)), g.standard_normal(12)
    w = np.ones(12)
    w[4] = 2.0
    dup = weighted_least_squares(np.vstack([x, x[4:5]]), np.append(y, y[4]), np.ones(13))
    np.testing.assert_allclose(weighted_least_squares(x, y, w), dup, atol=1e-12)


@given(st.integers(0, 10_000), st.floats(1e-6, 1e6))
def test_wls_scale_invariant(seed, k):
    g = rng(seed)
    x, y = g.standard_normal((25, 3)), g.standard_normal(25)
    w = g.uniform(0.1, 3, 25)
    a = weighted_least_squares(x, y, w)
    b = weighted_least_squares(x, y, k * w)
    assert np.linalg.norm(a - b) <= 1e-10 * max(1.0, np.linalg.norm(a))


def test_wls_errors():
    x = np.ones((3, 2))
    with pytest.raises(ValueError):
        weighted_least_squares(x, np.ones(3), np.zeros(3))
    with pytest.raises(ValueError):
        weighted_least_squares(x, np.ones(3), np.ones(2))
    with pytest.raises(ValueError):
        WeightVector(np.array([1.0, -1.0]))


def test_wls_limit_law_small():
    # reduced-size version of the full limit-law acceptance check
    d, n, reps = 2, 4000, 400
    ss = np.diag([1.5, 1.0])
    st_ = np.diag([1.0, 0.8])
    beta = np.array([1.0, -0.5])
    m = gaussian_limit_covariance(ss, st_, 1.0)
    g = rng(2)
    draws = np.empty((reps, d))
    for k in range(reps):
        x = sample_gaussian_design(n, ss, g)
        y = x @ beta + g.standard_normal(n)
        draws[k] = math.sqrt(n) * (weighted_least_squares(x, y, gaussian_true_ratio(ss, st_, x)) - beta)
    emp = draws.T @ draws / reps
    assert np.linalg.norm(emp - m) / np.linalg.norm(m) < 0.2


# --- plug-in covariance ----------------------------------------------------


def test_m_hat_cases():
    g = rng(3)
    x = g.standard_normal((10, 2))
    beta = np.array([1.0, 2.0])
    np.testing.assert_array_equal(estimate_m_hat(x, x @ beta, np.ones(10), beta, np.eye(2)).m_hat, 0.0)
    e = 0.7
    m = estimate_m_hat([[1.0]], [e], [2.0], [0.0], [[1.0]]).m_hat
    assert m[0, 0] == pytest.approx(4 * e * e, rel=1e-14)


def test_m_hat_no_shift_limit():
    g = rng(4)
    n, sigma = 40_000, 1.5
    s = np.diag([2.0, 1.0, 0.5])
    x = sample_gaussian_design(n, s, g)
    beta = np.array([1.0, 0.0, -1.0])
    y = x @ beta + sigma * g.standard_normal(n)
    b = weighted_least_squares(x, y, np.ones(n))
    m = estimate_m_hat(x, y, np.ones(n), b, s).m_hat
    ref = sigma**2 * np.linalg.inv(s) @ (x.T @ x / n) @ np.linalg.inv(s)
    assert np.linalg.norm(m - ref) / np.linalg.norm(ref) < 0.03


@given(st.integers(0, 10_000))
def test_m_hat_symmetric_psd(seed):
    g = rng(seed)
    x, y = g.standard_normal((15, 3)), g.standard_normal(15)
    m = estimate_m_hat(x, y, g.uniform(0, 3, 15), g.standard_normal(3), rand_spd(g, 3)).m_hat
    assert np.array_equal(m, m.T)
    assert np.linalg.eigvalsh(m)[0] >= -1e-10


def test_m_hat_singular_target_warns():
    x = np.eye(2)
    with pytest.warns(RuntimeWarning, match="pseudo-inverse"):
        estimate_m_hat(x, [1.0, 1.0], [1.0, 1.0], [0.0, 0.0], np.diag([1.0, 0.0]))
    with pytest.raises(ValueError):
        AsymptoticCovariance(-np.eye(2))


# --- minimax correction ----------------------------------------------------


def test_correction_trivial_cases():
    rep = minimax_with_approx_error(np.zeros((2, 2)), np.eye(2), 10, 1.0)
    np.testing.assert_array_equal(rep.coefficient, np.eye(2))
    rep = minimax_with_approx_error(np.eye(2), np.eye(2), 10, 0.0)
    np.testing.assert_array_equal(rep.coefficient, 0.0)
    with pytest.raises(ValueError):
        minimax_with_approx_error(np.eye(2), np.eye(2), 0, 1.0)


@settings(max_examples=10)
@given(st.integers(1, 6), st.integers(0, 10_000))
def test_correction_reduces_to_closed_form(d, seed):
    g = rng(seed)
    ss, tt, *_ = commuting_pair(g, d)
    sigma, n = 1.2, 80
    rep = minimax_with_approx_error(sigma**2 * np.linalg.inv(ss), tt, n, 1.5)
    fit = minimax_commutative(ShiftProblem(ss, tt, n, sigma, 1.5))
    assert abs(rep.objective - fit.risk) <= 1e-3 * fit.risk


# --- ratios ---------------------------------------------------------------


def test_true_ratio_cases():
    s = np.diag([1.0, 2.0])
    assert gaussian_true_ratio(s, s, np.array([3.0, -1.0])) == pytest.approx(1.0)
    t = np.diag([0.5, 1.0])
    assert gaussian_true_ratio(s, t, np.zeros(2)) == pytest.approx(math.sqrt(2.0 / 0.5))
    with pytest.raises(ValueError):
        gaussian_true_ratio(np.diag([1.0, 0.0]), t, np.zeros(2))


@given(st.integers(1, 4), st.integers(0, 10_000))
def test_true_ratio_matches_density_quotient(d, seed):
    g = rng(seed)
    s, t = rand_spd(g, d, 0.5, 2.0), rand_spd(g, d, 0.5, 2.0)
    x = g.standard_normal(d)
    assert gaussian_true_ratio(s, t, x) == pytest.approx(_gauss_pdf(x, t) / _gauss_pdf(x, s), rel=1e-10)


def test_same_distribution_scores_half():
    g = rng(5)
    m = fit_density_ratio(g.standard_normal((3000, 2)), g.standard_normal((2000, 2)), "quadratic")
    assert abs(m.score(g.standard_normal((4000, 2))).mean() - 0.5) < 0.02


def test_score_transform_identity():
    m = DensityRatioModel("linear", {}, np.array([0.5, 0.0]), np.zeros(11))
    np.testing.assert_allclose(m.ratio(np.ones((3, 1))), 1.0)


def test_rbf_fit_tracks_closed_form():
    g = rng(6)
    xs = g.standard_normal((10_000, 1))
    xt = 0.5 + g.standard_normal((10_000, 1))
    m = fit_density_ratio(xs, xt, "rbf", seed=1)
    held = np.linspace(-3, 3.5, 500)[:, None]
    ps = np.exp(-0.5 * held[:, 0] ** 2)
    pt = np.exp(-0.5 * (held[:, 0] - 0.5) ** 2)
    assert np.corrcoef(m.score(held), pt / (ps + pt))[0, 1] >= 0.9


@given(st.integers(0, 10_000), st.sampled_from(["linear", "quadratic", "rbf"]))
@settings(max_examples=15)
def test_scores_clipped_and_swap_symmetric(seed, kind):
    g = rng(seed)
    xs = g.standard_normal((300, 2))
    xt = g.standard_normal((200, 2)) * 1.3 + 0.4
    a = fit_density_ratio(xs, xt, kind, n_centers=20, seed=seed)
    b = fit_density_ratio(xt, xs, kind, n_centers=20, seed=seed)
    pts = np.vstack([xs, xt])
    sa, sb = a.score(pts), b.score(pts)
    assert np.all((sa >= 1e-6) & (sa <= 1 - 1e-6))
    inside = (sa > 1e-6) & (sa < 1 - 1e-6) & (sb > 1e-6) & (sb < 1 - 1e-6)
    np.testing.assert_allclose(sa[inside] + sb[inside], 1.0, atol=1e-8)


def test_density_ratio_errors():
    with pytest.raises(ValueError):
        fit_density_ratio(np.zeros((0, 2)), np.ones((3, 2)))
    with pytest.raises(ValueError):
        fit_density_ratio(np.ones((3, 2)), np.ones((3, 3)))
    with pytest.raises(ValueError):
        fit_density_ratio(np.ones((3, 2)), np.ones((3, 2)), "cubic")


# --- relative weights ------------------------------------------------------


def _model_with_identity_score(d=1):
    coef = np.zeros(d + 1)
    coef[1] = 1.0
    return DensityRatioModel("linear", {}, coef, np.zeros(11))


def test_relative_weights_cases():
    m = _model_with_identity_score()
    x = np.linspace(0.01, 0.99, 10)[::-1, None]
    np.testing.assert_array_equal(relative_weights(m, x, 0.0).weights, 1.0)
    w = relative_weights(m, x, 1.0).weights
    np.testing.assert_allclose(w, np.arange(10, 0, -1) / 5.5, rtol=1e-14)


@given(st.integers(10, 80), st.integers(0, 10_000), st.floats(0, 1))
def test_relative_weights_properties(n, seed, c):
    g = rng(seed)
    m = _model_with_identity_score()
    x = g.uniform(0, 1, (n, 1))
    w = relative_weights(m, x, c).weights
    assert w.mean() == pytest.approx(1.0, abs=1e-12)
    order = np.argsort(x[:, 0])
    assert np.all(np.diff(w[order]) >= -1e-12)
    perm = g.permutation(n)
    np.testing.assert_allclose(relative_weights(m, x[perm], c).weights, w[perm], rtol=1e-12)


def test_relative_weights_small_sample_and_bad_exponent():
    m = _model_with_identity_score()
    with pytest.warns(RuntimeWarning, match="3 buckets"):
        w = relative_weights(m, np.array([[0.1], [0.2], [0.3], [0.4], [0.5]]), 1.0).weights
    assert len(set(np.round(w, 12))) == 3
    with pytest.raises(ValueError):
        relative_weights(m, np.ones((12, 1)), 1.5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        relative_weights(m, np.ones((12, 1)), 0.5)
