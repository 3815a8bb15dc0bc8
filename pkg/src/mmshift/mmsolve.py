"""Solver for the operator-norm regularized minimax programs.

The covariate-shift programs (population target, unlabeled-sample target,
joint source/target statistic, approximation-error plug-in) all share the
form

    F(C) = r^2 ||W^{1/2} (C - I)||_op^2 + Tr(C Q C^T W)

for a loss geometry ``W`` and noise kernel ``Q``. The epigraph variable of
the semidefinite formulation equals the operator-norm term at any optimum,
so it is eliminated.

Writing the squared operator norm as ``max_P Tr(E^T W E P)`` over the
spectraplex ``{P >= 0, Tr P = 1}`` turns ``F`` into a convex-concave saddle
problem. For fixed ``P`` the inner minimum over ``C`` is attained at
``C(P) = r^2 P (r^2 P + Q)^{-1}``, i.e. the Bayes estimator under the prior
``N(0, r^2 P)``, and the dual function

    g(P) = min_C L(C, P)

is concave and smooth whenever ``Q`` is positive definite. ``g`` is maximized
with L-BFGS over a factorization ``P = L L^T / ||L||_F^2``. Every ``g(P)`` is
a lower bound and every ``F(C(P))`` an upper bound on the optimal value, so
the run stops on a certified relative duality gap. The two-block model-shift
program is handled the same way with one spectraplex per operator-norm term.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .numerics import as_sym, is_psd, lambda_max, psd_pinv

__all__ = [
    "ModelShiftReport",
    "SolveReport",
    "SpectralProgram",
    "minimax_objective",
    "model_shift_objective",
    "smoothed_opnorm",
    "solve_minimax_program",
    "solve_model_shift_program",
]

REL_GAP = 1e-5
MAX_ITER = 5000
CHECK_EVERY = 5
MAX_RESTARTS = 5


@dataclass(frozen=True)
class SpectralProgram:
    """``min_C r^2 ||weight^{1/2}(C - I)||_op^2 + Tr(C noise_kernel C^T weight)``."""

    weight: np.ndarray
    noise_kernel: np.ndarray
    radius: float

    def __post_init__(self):
        w = as_sym(self.weight)
        q = as_sym(self.noise_kernel)
        if w.shape != q.shape:
            raise ValueError(f"dimension mismatch: {w.shape} vs {q.shape}")
        if not (is_psd(w) and is_psd(q)):
            raise ValueError("weight and noise_kernel must be PSD")
        if not self.radius >= 0:
            raise ValueError("radius must be nonnegative")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "noise_kernel", q)

    @property
    def dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class SolveReport:
    """Result of a solve.

    ``gap`` is the certified gap between ``objective`` and the best dual
    lower bound; ``history`` holds the best objective at each check and is
    non-increasing.
    """

    coefficient: np.ndarray
    objective: float
    bias_term: float
    variance_term: float
    iterations: int
    converged: bool
    gap: float = 0.0
    history: np.ndarray = field(default=None, repr=False)


@dataclass
class ModelShiftReport(SolveReport):
    """Two-block report; ``coefficient`` holds ``A1 + A2``."""

    a1: np.ndarray = field(default=None, repr=False)
    a2: np.ndarray = field(default=None, repr=False)
    bias_shared: float = 0.0
    bias_shift: float = 0.0

    def __iter__(self):
        # unpacks as (A1, A2, report)
        return iter((self.a1, self.a2, self))


def _soft_top(m: np.ndarray, mu: float) -> tuple[float, np.ndarray, float]:
    """Smoothed largest eigenvalue of symmetric ``m``.

    Returns ``mu * log(sum exp(eig/mu))``, its gradient with respect to
    ``m`` (a PSD matrix with unit trace) and the exact largest eigenvalue.
    """
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    top = w[-1]
    z = np.exp((w - top) / mu)
    total = z.sum()
    val = top + mu * math.log(total)
    p = (v * (z / total)) @ v.T
    return float(val), p, float(top)


def smoothed_opnorm(b, mu: float) -> tuple[float, np.ndarray]:
    """Log-sum-exp smoothing of ``||b||_op^2`` and its exact gradient.

    The value lies in ``[||b||_op^2, ||b||_op^2 + mu log d]``.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    b = np.atleast_2d(np.asarray(b, dtype=float))
    val, p, _ = _soft_top(b.T @ b, mu)
    return val, 2.0 * b @ p


def minimax_objective(c, prog: SpectralProgram) -> tuple[float, float]:
    """Exact ``(bias, variance)`` terms of the single-block objective."""
    c = np.asarray(c, dtype=float)
    e = c - np.eye(prog.dim)
    bias = prog.radius**2 * max(lambda_max(e.T @ prog.weight @ e), 0.0)
    var = float(np.sum((c @ prog.noise_kernel) * (prog.weight @ c)))
    return float(bias), max(var, 0.0)


def _solve_right(k: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """``X`` with ``X k = rhs`` for symmetric ``k``."""
    try:
        return np.linalg.solve(k, rhs.T).T
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(k, rhs.T, rcond=None)[0].T


class _SingleDual:
    blocks = 1

    def __init__(self, prog: SpectralProgram):
        self.w = prog.weight
        self.q = prog.noise_kernel
        self.r2 = prog.radius**2
        self.eye = np.eye(prog.dim)

    def evaluate(self, ps):
        """Dual value, its gradients and the inner minimizer."""
        (p,) = ps
        rp = self.r2 * p
        c = _solve_right(rp + self.q, rp)
        e = c - self.eye
        we = self.w @ e
        g = self.r2 * float(np.sum(we * (e @ p))) + float(np.sum((c @ self.q) * (self.w @ c)))
        return g, [self.r2 * (e.T @ we)], c[None]

    def primal(self, x):
        e = x[0] - self.eye
        bias = self.r2 * max(lambda_max(e.T @ self.w @ e), 0.0)
        var = max(float(np.sum((x[0] @ self.q) * (self.w @ x[0]))), 0.0)
        return bias, var


class _TwoBlockDual:
    blocks = 2

    def __init__(self, sigma_t, q1, q2, var_weight, r, gamma, weighted):
        self.w = sigma_t
        self.q1 = q1
        self.q2 = q2
        self.vw = var_weight
        self.r2 = r**2
        self.g2 = gamma**2
        self.d = sigma_t.shape[0]
        self.eye = np.eye(self.d)
        self.weighted = weighted
        if not weighted:
            # the unweighted system separates over the rows of U^T A
            self.t, self.u = np.linalg.eigh(sigma_t)
            self.t = np.clip(self.t, 0.0, None)

    def _inner(self, p1, p2):
        d = self.d
        a = 2.0 * self.r2 * p1
        b = 2.0 * self.g2 * p2
        if self.weighted:
            k = np.block([[a + b + self.q1, a], [a, a + self.q2]])
            sol = _solve_right(k, np.hstack([a, a]))
            return sol[:, :d], sol[:, d:]
        t = self.t[:, None, None]
        k = np.empty((d, 2 * d, 2 * d))
        k[:, :d, :d] = t * (a + b) + self.q1
        k[:, :d, d:] = t * a
        k[:, d:, :d] = t * a
        k[:, d:, d:] = t * a + self.q2
        rows = self.t[:, None] * (self.u.T @ a)
        rhs = np.concatenate([rows, rows], axis=1)[:, :, None]
        try:
            sol = np.linalg.solve(k, rhs)[:, :, 0]
        except np.linalg.LinAlgError:
            sol = np.stack([np.linalg.lstsq(k[i], rhs[i, :, 0], rcond=None)[0] for i in range(d)])
        return self.u @ sol[:, :d], self.u @ sol[:, d:]

    def _var(self, a1, a2):
        v1 = float(np.sum((a1 @ self.q1) * (self.vw @ a1)))
        v2 = float(np.sum((a2 @ self.q2) * (self.vw @ a2)))
        return max(v1 + v2, 0.0)

    def evaluate(self, ps):
        p1, p2 = ps
        a1, a2 = self._inner(p1, p2)
        dd = a1 + a2 - self.eye
        wd = self.w @ dd
        wa = self.w @ a1
        g = (
            2.0 * self.r2 * float(np.sum(wd * (dd @ p1)))
            + 2.0 * self.g2 * float(np.sum(wa * (a1 @ p2)))
            + self._var(a1, a2)
        )
        grads = [2.0 * self.r2 * (dd.T @ wd), 2.0 * self.g2 * (a1.T @ wa)]
        return g, grads, np.stack([a1, a2])

    def opvals(self, x):
        dd = x[0] + x[1] - self.eye
        return (
            max(lambda_max(dd.T @ self.w @ dd), 0.0),
            max(lambda_max(x[0].T @ self.w @ x[0]), 0.0),
        )

    def primal(self, x):
        o1, o2 = self.opvals(x)
        return 2.0 * self.r2 * o1 + 2.0 * self.g2 * o2, self._var(x[0], x[1])


class _Done(Exception):
    pass


def _maximize_dual(dual, d, rel_gap=REL_GAP, max_iter=MAX_ITER):
    """L-BFGS ascent on the factored dual with a duality-gap stopping rule.

    Returns ``(x, bias, var, gap, iterations, converged, history)`` where
    ``x`` is the best primal point seen.
    """
    nb = dual.blocks
    st = {
        "lower": -math.inf,
        "upper": math.inf,
        "x": None,
        "terms": (math.nan, math.nan),
        "last": None,
        "iters": 0,
        "hist": [],
        "duals": [],
    }

    def factors(z):
        ls = z.reshape(nb, d, d)
        ss = [max(float(np.sum(l * l)), 1e-300) for l in ls]
        return ls, ss, [l @ l.T / s for l, s in zip(ls, ss)]

    def fun(z):
        ls, ss, ps = factors(z)
        g, gs, x = dual.evaluate(ps)
        if not math.isfinite(g):
            return math.inf, np.zeros_like(z)
        st["lower"] = max(st["lower"], g)
        st["last"] = (z.copy(), g, x)
        grad = np.stack(
            [2.0 * (gm @ l - float(np.sum(gm * p)) * l) / s for gm, l, s, p in zip(gs, ls, ss, ps)]
        )
        return -g, -grad.ravel()

    def check(z):
        last = st["last"]
        if last is None or not np.array_equal(last[0], z):
            fun(z)
            last = st["last"]
        st["duals"].append(last[1])
        bias, var = dual.primal(last[2])
        if bias + var < st["upper"]:
            st["upper"] = bias + var
            st["x"] = last[2]
            st["terms"] = (bias, var)
        st["hist"].append(st["upper"])
        return st["upper"] - st["lower"] <= rel_gap * max(abs(st["upper"]), 1e-300)

    def callback(zk):
        st["iters"] += 1
        if st["iters"] % CHECK_EVERY == 0 and check(zk):
            raise _Done
        if st["iters"] >= max_iter:
            raise _Done

    z = np.tile(np.eye(d), (nb, 1, 1)).ravel()
    done = check(z)
    restarts = 0
    while not done and st["iters"] < max_iter and restarts <= MAX_RESTARTS:
        lower_before = st["lower"]
        try:
            res = minimize(
                fun,
                z,
                jac=True,
                method="L-BFGS-B",
                callback=callback,
                options={"maxiter": max_iter, "maxcor": 30, "ftol": 0.0, "gtol": 0.0},
            )
            z = res.x
        except _Done:
            z = st["last"][0]
        done = check(z)
        restarts += 1
        if st["lower"] <= lower_before:
            break
    duals = np.asarray(st["duals"])
    if duals.size > 1 and np.any(np.diff(duals) < -1e-9 * np.abs(duals[:-1]) - 1e-300):
        raise RuntimeError("dual objective decreased across accepted iterations")
    gap = max(st["upper"] - st["lower"], 0.0)
    hist = np.asarray(st["hist"])
    return st["x"], st["terms"], gap, st["iters"], bool(done), hist


def solve_minimax_program(prog: SpectralProgram, rel_gap: float = REL_GAP,
                          max_iter: int = MAX_ITER) -> SolveReport:
    """Minimize ``r^2 ||W^{1/2}(C - I)||_op^2 + Tr(C Q C^T W)`` over ``C``.

    Parameters
    ----------
    prog : SpectralProgram
    rel_gap : float
        Stop once the certified duality gap is below ``rel_gap`` times the
        objective.
    max_iter : int
        Iteration cap; ``converged`` is False if it is hit first.
    """
    d = prog.dim
    eye = np.eye(d)
    if prog.radius == 0:
        return SolveReport(np.zeros((d, d)), 0.0, 0.0, 0.0, 0, True, 0.0, np.zeros(1))
    if np.allclose(prog.noise_kernel, 0.0, rtol=0.0, atol=1e-300):
        return SolveReport(eye.copy(), 0.0, 0.0, 0.0, 0, True, 0.0, np.zeros(1))
    dual = _SingleDual(prog)
    x, (bias, var), gap, iters, conv, hist = _maximize_dual(dual, d, rel_gap, max_iter)
    return SolveReport(x[0], bias + var, bias, var, iters, conv, gap, hist)


def _model_shift_dual(sigma_s_hat, sigma_t_hat, sigma_t, n_s, n_t, noise_std,
                      radius_r, radius_gamma, weight_variance):
    st = as_sym(sigma_t)
    if not is_psd(st):
        raise ValueError("sigma_t must be PSD")
    q1 = noise_std**2 / n_s * psd_pinv(sigma_s_hat)
    q2 = noise_std**2 / n_t * psd_pinv(sigma_t_hat)
    vw = st if weight_variance else np.eye(st.shape[0])
    return _TwoBlockDual(st, q1, q2, vw, radius_r, radius_gamma, weight_variance)


def solve_model_shift_program(
    sigma_s_hat,
    sigma_t_hat,
    sigma_t,
    n_s: int,
    n_t: int,
    noise_std: float,
    radius_r: float,
    radius_gamma: float,
    weight_variance: bool = True,
    rel_gap: float = REL_GAP,
    max_iter: int = MAX_ITER,
) -> ModelShiftReport:
    """Two-block relaxed model-shift program.

    Minimizes over ``(A1, A2)``::

        2 r^2 ||S (A1 + A2 - I)||_op^2 + 2 gamma^2 ||S A1||_op^2
          + sigma^2/n_S Tr(A1 pinv(Sigma_S_hat) A1^T V)
          + sigma^2/n_T Tr(A2 pinv(Sigma_T_hat) A2^T V)

    with ``S = sigma_t^{1/2}``. ``V`` is ``sigma_t`` when ``weight_variance``
    (the variance as measured by the target excess risk) and the identity
    otherwise. ``sigma_t`` is whatever the caller supplies, population
    target second moment or an unlabeled-sample estimate.
    """
    if n_s < 1 or n_t < 1:
        raise ValueError(
            "model-shift program needs n_s >= 1 and n_t >= 1; "
            "with no target labels use the covariate-shift path"
        )
    if radius_r < 0 or radius_gamma < 0:
        raise ValueError("radii must be nonnegative")
    if not noise_std > 0:
        raise ValueError("noise_std must be positive")
    dual = _model_shift_dual(sigma_s_hat, sigma_t_hat, sigma_t, n_s, n_t, noise_std,
                             radius_r, radius_gamma, weight_variance)
    d = dual.d
    if radius_r == 0:
        # beta_T = 0 is the only admissible target parameter
        z = np.zeros((d, d))
        return ModelShiftReport(z, 0.0, 0.0, 0.0, 0, True, 0.0, np.zeros(1), a1=z, a2=z.copy())
    x, (bias, var), gap, iters, conv, hist = _maximize_dual(dual, d, rel_gap, max_iter)
    o1, o2 = dual.opvals(x)
    b_shared = 2.0 * dual.r2 * o1
    b_shift = 2.0 * dual.g2 * o2
    return ModelShiftReport(
        x[0] + x[1], bias + var, bias, var, iters, conv, gap, hist,
        a1=x[0], a2=x[1], bias_shared=b_shared, bias_shift=b_shift,
    )


def model_shift_objective(a1, a2, sigma_s_hat, sigma_t_hat, sigma_t, n_s, n_t, noise_std,
                          radius_r, radius_gamma, weight_variance: bool = True) -> float:
    """Exact value of the two-block objective at ``(a1, a2)``."""
    dual = _model_shift_dual(sigma_s_hat, sigma_t_hat, sigma_t, n_s, n_t, noise_std,
                             radius_r, radius_gamma, weight_variance)
    b, v = dual.primal(np.stack([np.asarray(a1, float), np.asarray(a2, float)]))
    return b + v
