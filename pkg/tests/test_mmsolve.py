import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _helpers import commuting_pair, rand_orth, rand_spd, rng
from mmshift.covshift import ShiftProblem, minimax_commutative
from mmshift.mmsolve import (
    SpectralProgram,
    minimax_objective,
    model_shift_objective,
    smoothed_opnorm,
    solve_minimax_program,
    solve_model_shift_program,
)
from mmshift.riskeval import worst_case_risk


def _objective(c, w, q, r):
    b = worst_case_risk(c, q, w, r)
    return b.total


def test_zero_noise_returns_identity():
    rep = solve_minimax_program(SpectralProgram(np.eye(3), np.zeros((3, 3)), 1.0))
    np.testing.assert_array_equal(rep.coefficient, np.eye(3))
    assert rep.objective == 0.0


def test_zero_radius_returns_zero():
    rep = solve_minimax_program(SpectralProgram(np.eye(3), np.eye(3), 0.0))
    np.testing.assert_array_equal(rep.coefficient, 0.0)
    assert rep.objective == 0.0


def test_scalar_oracle():
    # d = 1: min_c r^2 (c-1)^2 + q c^2 gives c = r^2/(r^2+q)
    r, q = 1.5, 0.4
    rep = solve_minimax_program(SpectralProgram([[1.0]], [[q]], r))
    assert rep.coefficient[0, 0] == pytest.approx(r * r / (r * r + q), rel=1e-4)
    assert rep.objective == pytest.approx(r * r * q / (r * r + q), rel=1e-5)


@settings(max_examples=15)
@given(st.integers(1, 8), st.integers(0, 100_000), st.floats(0.2, 10))
def test_matches_commutative_closed_form(d, seed, r):
    g = rng(seed)
    ss, tt, *_ = commuting_pair(g, d)
    p = ShiftProblem(ss, tt, 40, 1.0, r)
    fit = minimax_commutative(p)
    rep = solve_minimax_program(SpectralProgram(tt, p.noise_kernel, r))
    assert rep.converged
    assert abs(rep.objective - fit.risk) <= 1e-3 * fit.risk
    assert rep.objective >= fit.risk * (1 - 1e-9)


@settings(max_examples=15)
@given(st.integers(2, 6), st.integers(0, 100_000))
def test_commuting_solution_shrinks_in_shared_basis(d, seed):
    g = rng(seed)
    ss, tt, u, s, t = commuting_pair(g, d)
    p = ShiftProblem(ss, tt, 40, 1.0, 1.0)
    rep = solve_minimax_program(SpectralProgram(tt, p.noise_kernel, 1.0), rel_gap=1e-10)
    c = u.T @ rep.coefficient @ u
    diag = np.diag(c)
    assert np.abs(c - np.diag(diag)).max() <= 1e-4
    assert np.all(diag >= -1e-4) and np.all(diag <= 1 + 1e-4)


@settings(max_examples=15)
@given(st.integers(1, 7), st.integers(0, 100_000), st.floats(0.1, 5))
def test_general_solution_certified(d, seed, r):
    g = rng(seed)
    w = rand_spd(g, d)
    q = rand_spd(g, d) / 30
    rep = solve_minimax_program(SpectralProgram(w, q, r))
    assert rep.converged
    assert rep.gap <= 1e-5 * rep.objective + 1e-15
    assert _objective(rep.coefficient, w, q, r) == pytest.approx(rep.objective, rel=1e-10)
    bias, var = minimax_objective(rep.coefficient, SpectralProgram(w, q, r))
    assert bias + var == pytest.approx(rep.objective, rel=1e-10)
    assert np.all(np.diff(rep.history) <= 1e-12 * rep.objective)
    # no random perturbation does better than the certified gap allows
    for _ in range(20):
        c = rep.coefficient + 1e-2 * g.standard_normal((d, d))
        assert _objective(c, w, q, r) >= rep.objective - rep.gap - 1e-12


def test_beats_baselines():
    g = rng(7)
    d = 6
    w, ss = rand_spd(g, d), rand_spd(g, d)
    q = np.linalg.inv(ss) / 50
    r = 2.0
    rep = solve_minimax_program(SpectralProgram(w, q, r))
    for lam in np.logspace(-4, 2, 13):
        ridge = np.linalg.solve(ss + lam * np.eye(d), ss)
        assert rep.objective <= _objective(ridge, w, q, r) + 1e-12
    assert rep.objective <= _objective(np.eye(d), w, q, r)


@given(st.integers(2, 6), st.integers(0, 100_000))
@settings(max_examples=10)
def test_rotation_equivariance(d, seed):
    g = rng(seed)
    w, q = rand_spd(g, d), rand_spd(g, d) / 20
    o = rand_orth(g, d)
    a = solve_minimax_program(SpectralProgram(w, q, 1.0))
    b = solve_minimax_program(SpectralProgram(o @ w @ o.T, o @ q @ o.T, 1.0))
    assert b.objective == pytest.approx(a.objective, rel=3e-5)


def test_objective_convex_along_segments():
    g = rng(8)
    d = 4
    prog = SpectralProgram(rand_spd(g, d), rand_spd(g, d) / 10, 1.3)
    for _ in range(30):
        c0, c1 = g.standard_normal((2, d, d))
        f0, f1 = sum(minimax_objective(c0, prog)), sum(minimax_objective(c1, prog))
        for t in (0.25, 0.5, 0.75):
            ft = sum(minimax_objective((1 - t) * c0 + t * c1, prog))
            assert ft <= (1 - t) * f0 + t * f1 + 1e-10


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 100_000), st.floats(1e-3, 1.0))
def test_smoothed_opnorm_bounds_and_gradient(m, d, seed, mu):
    g = rng(seed)
    b = g.standard_normal((m, d))
    val, grad = smoothed_opnorm(b, mu)
    exact = np.linalg.norm(b, 2) ** 2
    assert exact - 1e-10 <= val <= exact + mu * math.log(d) + 1e-10
    e = g.standard_normal((m, d))
    h = 1e-6
    fd = (smoothed_opnorm(b + h * e, mu)[0] - smoothed_opnorm(b - h * e, mu)[0]) / (2 * h)
    assert fd == pytest.approx(np.sum(grad * e), rel=1e-4, abs=1e-6)


def test_smoothed_opnorm_simple_cases():
    val, grad = smoothed_opnorm(np.zeros((3, 3)), 0.5)
    assert val == pytest.approx(0.5 * math.log(3), rel=1e-14)
    np.testing.assert_array_equal(grad, 0.0)
    val, grad = smoothed_opnorm([[1.7]], 1e-3)
    assert val == pytest.approx(1.7**2, rel=1e-14)
    assert grad[0, 0] == pytest.approx(2 * 1.7, rel=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_smoothed_opnorm_sharp_gradient(seed):
    g = rng(seed)
    b = g.standard_normal((4, 4))
    mu, h = 1e-6, 1e-5
    val, grad = smoothed_opnorm(b, mu)
    exact = np.linalg.norm(b, 2) ** 2
    # svd and eigh round differently in the last place
    assert exact * (1 - 1e-14) <= val <= exact + mu * math.log(4) + 1e-12
    fd = np.empty((4, 4))
    for i in range(4):
        for j in range(4):
            e = np.zeros((4, 4))
            e[i, j] = h
            fd[i, j] = (smoothed_opnorm(b + e, mu)[0] - smoothed_opnorm(b - e, mu)[0]) / (2 * h)
    assert np.abs(fd - grad).max() <= 1e-4 * np.abs(grad).max()


def test_smoothed_opnorm_rejects_bad_mu():
    with pytest.raises(ValueError):
        smoothed_opnorm(np.eye(2), 0.0)


def test_program_validation():
    with pytest.raises(ValueError):
        SpectralProgram(np.eye(2), np.eye(3), 1.0)
    with pytest.raises(ValueError):
        SpectralProgram(np.eye(2), -np.eye(2), 1.0)
    with pytest.raises(ValueError):
        SpectralProgram(np.eye(2), np.eye(2), -1.0)


# --- two-block model-shift program ------------------------------------------


def _ms_args(g, d, n_s=200, n_t=50):
    return dict(sigma_s_hat=rand_spd(g, d), sigma_t_hat=rand_spd(g, d), sigma_t=rand_spd(g, d),
                n_s=n_s, n_t=n_t, noise_std=1.0)


@pytest.mark.parametrize("seed", range(3))
def test_model_shift_symmetric_when_blocks_match(seed):
    g = rng(9 + seed)
    d = 3
    s = rand_spd(g, d)
    rep = solve_model_shift_program(s, s, s, 100, 100, 1.0, 1.0, 0.0, rel_gap=1e-12)
    assert np.abs(rep.a1 - rep.a2).max() <= 1e-6


def test_model_shift_large_gamma_drops_source():
    g = rng(10)
    args = _ms_args(g, 4)
    r = 1.0
    rep = solve_model_shift_program(**args, radius_r=r, radius_gamma=1e6 * r)
    assert rep.converged
    assert np.linalg.norm(rep.a1) < 1e-3
    # the remaining block solves the target-only program with radius sqrt(2) r
    q2 = np.linalg.inv(args["sigma_t_hat"]) / args["n_t"]
    ref = solve_minimax_program(SpectralProgram(args["sigma_t"], q2, math.sqrt(2) * r))
    assert rep.objective == pytest.approx(ref.objective, rel=1e-3)


def test_model_shift_scalar_grid_oracle():
    ss, st_hat, t, n_s, n_t, r, gam = 1.0, 2.0, 1.5, 30, 10, 0.8, 0.3
    kw = dict(sigma_s_hat=[[ss]], sigma_t_hat=[[st_hat]], sigma_t=[[t]], n_s=n_s, n_t=n_t,
              noise_std=1.0, radius_r=r, radius_gamma=gam, weight_variance=False)

    def scalar(a, b):
        return (2 * r * r * t * (a + b - 1) ** 2 + 2 * gam * gam * t * a * a
                + a * a / (n_s * ss) + b * b / (n_t * st_hat))

    for a, b in [(0.3, 0.2), (-0.1, 0.9), (1.2, 0.0)]:
        assert model_shift_objective([[a]], [[b]], **kw) == pytest.approx(scalar(a, b), rel=1e-12)
    rep = solve_model_shift_program(**kw, rel_gap=1e-9)
    grid = np.linspace(-2.0, 2.0, 4001)
    best = scalar(grid[:, None], grid[None, :]).min()
    assert rep.objective <= best + 1e-9
    assert rep.objective >= best - 1e-4 * best


def test_model_shift_objective_consistent_and_unpacks():
    g = rng(11)
    args = _ms_args(g, 3)
    rep = solve_model_shift_program(**args, radius_r=1.0, radius_gamma=0.5)
    a1, a2, same = rep
    assert same is rep
    val = model_shift_objective(a1, a2, **args, radius_r=1.0, radius_gamma=0.5)
    assert val == pytest.approx(rep.objective, rel=1e-10)
    np.testing.assert_allclose(rep.coefficient, a1 + a2)
    assert rep.bias_shared + rep.bias_shift == pytest.approx(rep.bias_term, rel=1e-10)


def test_model_shift_rejects_empty_target():
    with pytest.raises(ValueError, match="covariate-shift"):
        solve_model_shift_program(np.eye(2), np.eye(2), np.eye(2), 10, 0, 1.0, 1.0, 1.0)
