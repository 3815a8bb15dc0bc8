"""Covariate shift with a linear model: sufficient statistics, the
commutative closed-form minimax estimator and the closed-form ridge
baselines.

Every estimator here is represented by a d x d coefficient matrix ``C``
applied to the unbiased sufficient statistic, ``beta_hat = C @ beta_ss``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .numerics import as_sym, commute, is_psd, joint_eigbasis, psd_pinv

__all__ = [
    "CommutativeFit",
    "NonCommutingError",
    "ShiftProblem",
    "SufficientStatistic",
    "WaterFillResult",
    "joint_sufficient_statistic",
    "minimax_commutative",
    "ridge_source",
    "ridge_target",
    "sufficient_statistic",
    "waterfill_lambda",
]


class NonCommutingError(ValueError):
    """The closed form needs simultaneously diagonalizable moment matrices."""


@dataclass(frozen=True)
class ShiftProblem:
    """A covariate-shift estimation instance.

    Attributes
    ----------
    sigma_s_hat : ndarray (d, d)
        Empirical source second moment ``X_S.T @ X_S / n_S``.
    sigma_t : ndarray (d, d)
        Target second moment, population or estimated from unlabeled data.
    n_source : int
    noise_std : float
    radius : float
        Bound ``r`` on ``||beta*||``.
    """

    sigma_s_hat: np.ndarray
    sigma_t: np.ndarray
    n_source: int
    noise_std: float
    radius: float

    def __post_init__(self):
        s = as_sym(self.sigma_s_hat)
        t = as_sym(self.sigma_t)
        if s.shape != t.shape:
            raise ValueError(f"dimension mismatch: {s.shape} vs {t.shape}")
        if not (is_psd(s) and is_psd(t)):
            raise ValueError("second-moment matrices must be PSD")
        if self.n_source < 1:
            raise ValueError("n_source must be >= 1")
        if not self.noise_std > 0:
            raise ValueError("noise_std must be positive")
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        object.__setattr__(self, "sigma_s_hat", s)
        object.__setattr__(self, "sigma_t", t)

    @property
    def dim(self) -> int:
        return self.sigma_t.shape[0]

    @property
    def noise_kernel(self) -> np.ndarray:
        """Covariance of the sufficient statistic, ``sigma^2/n_S * pinv(Sigma_S_hat)``."""
        return self.noise_std**2 / self.n_source * psd_pinv(self.sigma_s_hat)


@dataclass(frozen=True)
class SufficientStatistic:
    beta_ss: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True)
class WaterFillResult:
    lam: float
    shrinkages: np.ndarray
    residual: float
    iterations: int = 0
    degenerate: bool = False


@dataclass(frozen=True)
class CommutativeFit:
    coefficient: np.ndarray
    risk: float
    waterfill: WaterFillResult
    basis: np.ndarray = field(repr=False)
    s: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)


def _check_xy(x, y):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"{x.shape[0]} rows in X but {y.shape[0]} labels")
    return x, y


def sufficient_statistic(x_source, y_source, noise_std: float) -> SufficientStatistic:
    """Least-squares statistic ``pinv(Sigma_S_hat) X^T y / n`` and its exact covariance."""
    x, y = _check_xy(x_source, y_source)
    n = x.shape[0]
    if n < 1:
        raise ValueError("empty source sample")
    sigma_hat = x.T @ x / n
    pinv = psd_pinv(sigma_hat)
    beta = pinv @ (x.T @ y) / n
    return SufficientStatistic(beta, noise_std**2 / n * pinv)


def joint_sufficient_statistic(x_s, y_s, x_t, y_t, noise_std: float) -> SufficientStatistic:
    """Pooled statistic from labeled source and target samples.

    ``(n_S Sigma_S + n_T Sigma_T)^+ (X_S^T y_S + X_T^T y_T)`` with covariance
    ``sigma^2 (n_S Sigma_S + n_T Sigma_T)^+``. A target sample with zero
    rows reduces to :func:`sufficient_statistic` on the source.
    """
    xs, ys = _check_xy(x_s, y_s)
    if np.size(x_t) == 0:
        xt, yt = np.zeros((0, xs.shape[1])), np.zeros(0)
    else:
        xt, yt = _check_xy(x_t, y_t)
    if xs.shape[1] != xt.shape[1]:
        raise ValueError(f"source has d={xs.shape[1]}, target has d={xt.shape[1]}")
    if xs.shape[0] + xt.shape[0] == 0:
        raise ValueError("no samples")
    gram = xs.T @ xs + xt.T @ xt
    pinv = psd_pinv(gram)
    beta = pinv @ (xs.T @ ys + xt.T @ yt)
    return SufficientStatistic(beta, noise_std**2 * pinv)


def waterfill_lambda(s, t, noise_var_over_n: float, radius: float) -> WaterFillResult:
    """Water level ``lam`` solving ``k * sum_i (1/s_i)(sqrt(t_i)/lam - 1)_+ = r^2``.

    ``k`` is ``sigma^2 / n_S``. The level is bracketed by bisection on
    ``(0, max sqrt(t_i)]`` and then polished with the exact solution on the
    identified active set, which brings the residual to round-off.
    Directions with ``t_i = 0`` never enter the loss and get shrinkage 0.
    """
    s = np.asarray(s, dtype=float).reshape(-1)
    t = np.asarray(t, dtype=float).reshape(-1)
    if s.shape != t.shape:
        raise ValueError("s and t must have the same length")
    if radius < 0 or noise_var_over_n < 0:
        raise ValueError("radius and noise level must be nonnegative")
    t = np.where(np.abs(t) < 1e-300, 0.0, t)
    if np.any(t < 0) or np.any(s < 0):
        raise ValueError("spectra must be nonnegative")
    shrink = np.zeros_like(t)
    pos = t > 0
    if not pos.any():
        return WaterFillResult(math.nan, shrink, 0.0, 0, degenerate=True)
    if np.any(s[pos] <= 0):
        raise ValueError("s_i must be positive wherever t_i > 0")
    sqrt_t = np.sqrt(t[pos])
    inv_s = 1.0 / s[pos]
    r2 = float(radius) ** 2
    k = float(noise_var_over_n)

    if r2 == 0.0:
        return WaterFillResult(float(sqrt_t.max()), shrink, 0.0, 0)
    if k == 0.0:
        # noiseless limit: the level drops to zero and nothing is shrunk
        shrink[pos] = 1.0
        return WaterFillResult(0.0, shrink, 0.0, 0)

    lam, iters = kernels.waterfill_bisect(sqrt_t, inv_s, k, r2, 200)
    active = sqrt_t > lam
    if active.any():
        exact = k * np.sum(sqrt_t[active] * inv_s[active]) / (r2 + k * np.sum(inv_s[active]))
        lo = sqrt_t[~active].max() if (~active).any() else 0.0
        if lo <= exact <= sqrt_t[active].min():
            lam = float(exact)
    residual = kernels.waterfill_lhs(lam, sqrt_t, inv_s, k) - r2
    shrink[pos] = np.clip(1.0 - lam / sqrt_t, 0.0, None)
    return WaterFillResult(float(lam), shrink, float(residual), int(iters))


def minimax_commutative(p: ShiftProblem) -> CommutativeFit:
    """Closed-form linear minimax coefficient when the moment matrices commute.

    In the shared eigenbasis ``U`` the coefficient is
    ``U diag((1 - lam/sqrt(t_i))_+) U^T`` (conjugation by ``Sigma_T^{1/2}``
    is a no-op there), with worst-case risk
    ``sum_i (sigma^2/n)(t_i/s_i)(1 - lam/sqrt(t_i))_+``.
    """
    if not commute(p.sigma_s_hat, p.sigma_t):
        raise NonCommutingError(
            "Sigma_S_hat and Sigma_T do not commute; use mmsolve.solve_minimax_program"
        )
    u = joint_eigbasis(p.sigma_s_hat, p.sigma_t)
    s = np.einsum("ij,jk,ki->i", u.T, p.sigma_s_hat, u)
    t = np.einsum("ij,jk,ki->i", u.T, p.sigma_t, u)
    s = np.clip(s, 0.0, None)
    t = np.clip(t, 0.0, None)
    # numerical zeros relative to the spectrum scale
    t[t <= 1e-14 * max(t.max(), 1e-300)] = 0.0
    k = p.noise_std**2 / p.n_source
    wf = waterfill_lambda(s, t, k, p.radius)
    c = (u * wf.shrinkages) @ u.T
    pos = t > 0
    risk = float(np.sum(k * t[pos] / s[pos] * wf.shrinkages[pos]))
    return CommutativeFit(c, risk, wf, u, s, t)


def _ridge(m, lam: float) -> np.ndarray:
    m = as_sym(m)
    if lam < 0:
        raise ValueError("ridge strength must be >= 0")
    if lam == 0:
        return psd_pinv(m) @ m
    return np.linalg.solve(m + lam * np.eye(m.shape[0]), m)


def ridge_source(sigma_s_hat, lam: float) -> np.ndarray:
    """Ridge regression as a coefficient on the sufficient statistic: ``(S + lam I)^{-1} S``.

    ``lam = 0`` gives the projection onto ``range(S)`` (OLS when full rank).
    """
    return _ridge(sigma_s_hat, lam)


def ridge_target(sigma_t, lam: float) -> np.ndarray:
    """Ridge with target geometry, ``(Sigma_T + lam I)^{-1} Sigma_T``."""
    return _ridge(sigma_t, lam)
