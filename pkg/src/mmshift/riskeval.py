"""Exact risk of linear estimators.

For ``beta_hat = C @ beta_ss`` with ``beta_ss ~ N(beta*, Q)`` the target
excess risk at ``beta*`` is

    ||Sigma_T^{1/2} (C - I) beta*||^2 + Tr(C Q C^T Sigma_T),

and its maximum over ``||beta*|| <= r`` puts the bias on the top
eigenvector of ``(C - I)^T Sigma_T (C - I)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import kernels
from .covshift import ShiftProblem, WaterFillResult, waterfill_lambda
from .numerics import as_sym, psd_pinv, psd_sqrt, sym_eig
from .synth import make_rng

__all__ = [
    "ModelShiftRisk",
    "RiskReport",
    "SeparationInstance",
    "average_case_risk",
    "excess_risk",
    "model_shift_relaxed_risk",
    "model_shift_true_risk",
    "separation_instance",
    "sphere_grid",
    "worst_case_risk",
]


@dataclass(frozen=True)
class RiskReport:
    bias_sq: float
    variance: float
    total: float
    worst_direction: np.ndarray = field(repr=False)


def _variance(c, q, sigma_t) -> float:
    return max(float(np.sum((c @ q) * (sigma_t @ c))), 0.0)


def worst_case_risk(c, noise_kernel, sigma_t, radius: float) -> RiskReport:
    """Worst-case target excess risk over ``||beta*|| <= radius``.

    ``worst_direction`` is the unit top eigenvector of
    ``(C - I)^T Sigma_T (C - I)`` under the deterministic sign convention.
    """
    c = np.atleast_2d(np.asarray(c, dtype=float))
    q = as_sym(noise_kernel)
    st = as_sym(sigma_t)
    e = c - np.eye(c.shape[0])
    dec = sym_eig(e.T @ st @ e)
    bias = radius**2 * max(float(dec.eigvals[0]), 0.0)
    var = _variance(c, q, st)
    return RiskReport(bias, var, bias + var, dec.basis[:, 0].copy())


def average_case_risk(c, noise_kernel, sigma_t, prior_radius: float) -> float:
    """Bayes risk under ``beta* ~ N(0, r^2 I)``."""
    c = np.atleast_2d(np.asarray(c, dtype=float))
    st = as_sym(sigma_t)
    e = c - np.eye(c.shape[0])
    bias = prior_radius**2 * float(np.sum(e * (st @ e)))
    return max(bias, 0.0) + _variance(c, as_sym(noise_kernel), st)


def excess_risk(beta_hat, beta_star, sigma_t) -> float:
    """Realized excess risk ``(beta_hat - beta*)^T Sigma_T (beta_hat - beta*)``."""
    diff = np.asarray(beta_hat, dtype=float) - np.asarray(beta_star, dtype=float)
    return max(float(diff @ as_sym(sigma_t) @ diff), 0.0)


def _ms_parts(a1, a2, sigma_s_hat, sigma_t_hat, sigma_t, n_s, n_t, noise_std, weight_variance):
    a1 = np.atleast_2d(np.asarray(a1, dtype=float))
    a2 = np.atleast_2d(np.asarray(a2, dtype=float))
    st = as_sym(sigma_t)
    q1 = noise_std**2 / n_s * psd_pinv(sigma_s_hat)
    q2 = noise_std**2 / n_t * psd_pinv(sigma_t_hat)
    vw = st if weight_variance else np.eye(st.shape[0])
    var = _variance(a1, q1, vw) + _variance(a2, q2, vw)
    root = psd_sqrt(st)
    g = root @ (a1 + a2 - np.eye(a1.shape[0]))
    h = root @ a1
    return g, h, var


def model_shift_relaxed_risk(a1, a2, sigma_s_hat, sigma_t_hat, sigma_t, n_s, n_t, noise_std,
                             r: float, gamma: float, weight_variance: bool = True) -> float:
    """``2 r^2 ||G||_op^2 + 2 gamma^2 ||H||_op^2`` plus the two variance traces.

    ``G = Sigma_T^{1/2}(A1 + A2 - I)`` and ``H = Sigma_T^{1/2} A1``. The
    traces are weighted by ``Sigma_T`` when ``weight_variance`` (the
    expected target excess risk) and unweighted otherwise.
    """
    g, h, var = _ms_parts(a1, a2, sigma_s_hat, sigma_t_hat, sigma_t, n_s, n_t, noise_std,
                          weight_variance)
    return 2.0 * r**2 * np.linalg.norm(g, 2) ** 2 + 2.0 * gamma**2 * np.linalg.norm(h, 2) ** 2 + var


@dataclass(frozen=True)
class ModelShiftRisk:
    """Expected worst-case risk of ``A1 beta_S + A2 beta_T``.

    ``is_lower_bound`` is set when the bias maximum came from random
    restarts rather than a dense grid.
    """

    total: float
    bias_sq: float
    variance: float
    beta_direction: np.ndarray = field(repr=False)
    delta_direction: np.ndarray = field(repr=False)
    is_lower_bound: bool = False


def sphere_grid(d: int, resolution: int) -> np.ndarray:
    """Unit vectors from a uniform grid on the surface of ``[-1, 1]^d``.

    ``resolution`` points per axis on each face; antipodal duplicates are
    kept since the caller's objective is even.
    """
    if d == 1:
        return np.array([[1.0], [-1.0]])
    ticks = np.linspace(-1.0, 1.0, resolution)
    face = np.stack(np.meshgrid(*([ticks] * (d - 1)), indexing="ij"), axis=-1).reshape(-1, d - 1)
    pts = []
    for axis in range(d):
        for sign in (1.0, -1.0):
            p = np.insert(face, axis, sign, axis=1)
            pts.append(p)
    pts = np.concatenate(pts)
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


_DEFAULT_RES = {1: 2, 2: 4000, 3: 200, 4: 40}
_MIN_RES = 8


def _ascend(g, h, a, b, w, max_iter=10_000, tol=1e-15):
    """Monotone MM ascent of ``a ||g^T w|| + b ||h^T w||`` on the sphere.

    Each step is the closed-form best response
    ``u = g^T w / ||g^T w||``, ``v = h^T w / ||h^T w||``, ``w ∝ a g u + b h v``.
    """
    val = -math.inf
    for _ in range(max_iter):
        gu = g.T @ w
        hv = h.T @ w
        ng = np.linalg.norm(gu)
        nh = np.linalg.norm(hv)
        new = a * ng + b * nh
        if new <= val * (1.0 + tol):
            break
        val = new
        step = (a * (g @ gu) / ng if ng > 0 else 0.0) + (b * (h @ hv) / nh if nh > 0 else 0.0)
        ns = np.linalg.norm(step)
        if ns == 0:
            break
        w = step / ns
    gu, hv = g.T @ w, h.T @ w
    ng, nh = np.linalg.norm(gu), np.linalg.norm(hv)
    u = gu / ng if ng > 0 else np.eye(g.shape[1])[0]
    v = hv / nh if nh > 0 else np.eye(h.shape[1])[0]
    return a * ng + b * nh, u, v


def model_shift_true_risk(a1, a2, sigma_s_hat, sigma_t_hat, sigma_t, n_s, n_t, noise_std,
                          r: float, gamma: float, resolution: int = None, mode: str = "auto",
                          restarts: int = 100, seed=0, weight_variance: bool = True) -> ModelShiftRisk:
    """Worst case over ``||beta|| <= r``, ``||delta|| <= gamma`` of the expected risk.

    The bias ``max ||r G u + gamma H v||^2`` over unit ``u, v`` equals
    ``max_w (r ||G^T w|| + gamma ||H^T w||)^2`` over unit ``w``, a single
    sphere. ``mode="grid"`` (default for ``d <= 4``) scans a dense grid and
    polishes the best points; ``mode="restart"`` runs ``restarts`` random
    starts of the alternating best-response ascent and is flagged as a
    lower bound.
    """
    g, h, var = _ms_parts(a1, a2, sigma_s_hat, sigma_t_hat, sigma_t, n_s, n_t, noise_std,
                          weight_variance)
    d = g.shape[0]
    if mode == "auto":
        mode = "grid" if d <= 4 else "restart"
    if mode not in ("grid", "restart"):
        raise ValueError(f"unknown mode {mode!r}")
    best = (-math.inf, None, None)
    if mode == "grid":
        if d > 4:
            raise ValueError("grid mode is limited to d <= 4")
        res = _DEFAULT_RES[d] if resolution is None else int(resolution)
        if d > 1 and res < _MIN_RES:
            raise ValueError(f"grid resolution {res} is too coarse (need >= {_MIN_RES})")
        grid = sphere_grid(d, res)
        _, i0 = kernels.norm_sum_argmax(g, h, r, gamma, grid)
        # polish the grid winner plus the leading directions of each term
        starts = [grid[i0]]
        for m in (g @ g.T, h @ h.T, r**2 * (g @ g.T) + gamma**2 * (h @ h.T)):
            starts.append(sym_eig(m).basis[:, 0])
        for w in starts:
            cand = _ascend(g, h, r, gamma, w)
            if cand[0] > best[0]:
                best = cand
    else:
        rng = make_rng(seed)
        for _ in range(restarts):
            w = rng.standard_normal(d)
            cand = _ascend(g, h, r, gamma, w / np.linalg.norm(w))
            if cand[0] > best[0]:
                best = cand
    bias = best[0] ** 2
    return ModelShiftRisk(bias + var, bias, var, best[1], best[2], is_lower_bound=(mode == "restart"))


@dataclass(frozen=True)
class SeparationInstance:
    """Diagonal instance where ridge is a factor ``~d^{1/4}/2`` worse than minimax.

    Matrices are diagonal, so only their spectra are stored; :meth:`problem`
    materializes the dense :class:`ShiftProblem`.
    """

    s: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)
    n: int
    noise_std: float
    radius: float
    d0: int
    minimax_risk: float
    ridge_floor: float
    ridge_lambda: float
    waterfill: WaterFillResult = field(repr=False)

    @property
    def ratio(self) -> float:
        return self.ridge_floor / self.minimax_risk

    def problem(self) -> ShiftProblem:
        return ShiftProblem(np.diag(self.s), np.diag(self.t), self.n, self.noise_std, self.radius)

    def __iter__(self):
        # unpacks as (problem, minimax_risk, ridge_floor)
        return iter((self.problem(), self.minimax_risk, self.ridge_floor))


def _diag_ridge_risk(lam, s, t, k, r2):
    # worst_case_risk of ridge_source(diag(s), lam) with diagonal Sigma_T
    c = s / (s + lam)
    bias = r2 * float(np.max(t * (1.0 - c) ** 2))
    var = float(np.sum(k * t * c**2 / s))
    return bias + var


def separation_instance(d: int, n: int) -> SeparationInstance:
    """Build the ridge/minimax separation instance and evaluate both risks.

    ``s_i = 1``; ``t_i = 1`` for the first ``d0 = round(sqrt(d)/(d^{1/4} - 1))``
    coordinates and ``d^{-1/2}`` after; ``sigma = 1``; ``r^2 = sqrt(d)/n``.
    The minimax risk comes from water-filling. The ridge floor is the
    smallest worst-case risk of source ridge over a 400-point log grid of
    ``lambda`` in ``[1e-4, 1e4]``, refined by golden-section search around
    the grid minimum.
    """
    d = int(d)
    root4 = round(d**0.25)
    if root4**4 != d or root4 < 2:
        raise ValueError(f"d must be a fourth power >= 16, got {d}")
    if n < 1:
        raise ValueError("n must be >= 1")
    d0 = int(round(math.sqrt(d) / (root4 - 1)))
    d0 = min(max(d0, 1), d)
    s = np.ones(d)
    t = np.full(d, 1.0 / math.sqrt(d))
    t[:d0] = 1.0
    r2 = math.sqrt(d) / n
    k = 1.0 / n
    wf = waterfill_lambda(s, t, k, math.sqrt(r2))
    minimax = float(np.sum(k * t / s * wf.shrinkages))

    grid = np.logspace(-4, 4, 400)
    risks = np.array([_diag_ridge_risk(lam, s, t, k, r2) for lam in grid])
    i = int(np.argmin(risks))
    best_lam, best = float(grid[i]), float(risks[i])
    if 0 < i < len(grid) - 1:
        bracket = (math.log(grid[i - 1]), math.log(grid[i]), math.log(grid[i + 1]))
        res = minimize_scalar(lambda z: _diag_ridge_risk(math.exp(z), s, t, k, r2),
                              bracket=bracket, method="golden", options={"xtol": 1e-10})
        if res.fun < best:
            best_lam, best = math.exp(res.x), float(res.fun)
    return SeparationInstance(s, t, n, 1.0, math.sqrt(r2), d0, minimax, best, best_lam, wf)
