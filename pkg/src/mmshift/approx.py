"""Covariate shift with a misspecified linear model.

Importance-weighted least squares, its plug-in asymptotic covariance, the
minimax correction applied on top of it, and density-ratio estimation by
least-squares regression of a domain indicator.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .mmsolve import SolveReport, SpectralProgram, solve_minimax_program
from .numerics import as_sym, is_psd, psd_pinv
from .synth import make_rng

__all__ = [
    "AsymptoticCovariance",
    "DensityRatioModel",
    "WeightVector",
    "estimate_m_hat",
    "fit_density_ratio",
    "gaussian_limit_covariance",
    "gaussian_true_ratio",
    "minimax_with_approx_error",
    "relative_weights",
    "weighted_least_squares",
]

CLIP = 1e-6
N_BUCKETS = 10
N_CENTERS = 100


@dataclass(frozen=True)
class WeightVector:
    """Nonnegative sample weights normalized to mean one."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.size == 0 or not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite, nonnegative and non-empty")
        if not w.sum() > 0:
            raise ValueError("weights are all zero")
        object.__setattr__(self, "weights", w / w.mean())


@dataclass(frozen=True)
class AsymptoticCovariance:
    m_hat: np.ndarray

    def __post_init__(self):
        m = as_sym(self.m_hat)
        if not is_psd(m):
            raise ValueError("asymptotic covariance must be PSD")
        object.__setattr__(self, "m_hat", m)


def _weights_array(w) -> np.ndarray:
    if isinstance(w, WeightVector):
        return w.weights
    w = np.asarray(w, dtype=float).reshape(-1)
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    if not w.sum() > 0:
        raise ValueError("weights are all zero")
    return w


def weighted_least_squares(x_s, y_s, w) -> np.ndarray:
    """``(X^T diag(w) X)^+ X^T diag(w) y``, solved in least-squares form.

    A rank-deficient weighted design falls back to the minimum-norm
    solution.
    """
    x = np.atleast_2d(np.asarray(x_s, dtype=float))
    y = np.asarray(y_s, dtype=float).reshape(-1)
    w = _weights_array(w)
    if not (x.shape[0] == y.shape[0] == w.shape[0]):
        raise ValueError("x, y and w must have the same number of rows")
    # scale-free: divide by the max so tiny or huge weights do not matter
    root = np.sqrt(w / w.max())
    coef, *_ = np.linalg.lstsq(x * root[:, None], y * root, rcond=None)
    return coef


def estimate_m_hat(x_s, y_s, w, beta_ls, sigma_t) -> AsymptoticCovariance:
    """``Sigma_T^{-1} (1/n) sum_i w_i^2 e_i^2 x_i x_i^T Sigma_T^{-1}``, symmetrized.

    ``e_i`` are the residuals of ``beta_ls``. Any supplied weights enter
    squared; relative weights scale the result by a constant that the
    radius tuning absorbs.
    """
    x = np.atleast_2d(np.asarray(x_s, dtype=float))
    y = np.asarray(y_s, dtype=float).reshape(-1)
    w = _weights_array(w)
    st = as_sym(sigma_t)
    if np.linalg.matrix_rank(st) < st.shape[0]:
        warnings.warn("Sigma_T is singular; using its pseudo-inverse", RuntimeWarning, stacklevel=2)
    s_inv = psd_pinv(st)
    e = y - x @ np.asarray(beta_ls, dtype=float)
    scale = (w * e) ** 2
    inner = (x * scale[:, None]).T @ x / x.shape[0]
    m = s_inv @ inner @ s_inv
    m = 0.5 * (m + m.T)
    # clip round-off negatives of an exactly PSD matrix
    vals, vecs = np.linalg.eigh(m)
    m = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    return AsymptoticCovariance(0.5 * (m + m.T))


def minimax_with_approx_error(m_hat, sigma_t, n_s: int, radius: float, **solver_kw) -> SolveReport:
    """Minimax correction ``C`` for the weighted least-squares estimate.

    Solves the spectral program with ``Q = M_hat / n_S`` and loss geometry
    ``Sigma_T``. The estimator is ``C @ beta_ls``.
    """
    m = m_hat.m_hat if isinstance(m_hat, AsymptoticCovariance) else as_sym(m_hat)
    if n_s < 1:
        raise ValueError("n_s must be >= 1")
    return solve_minimax_program(SpectralProgram(sigma_t, m / n_s, radius), **solver_kw)


def gaussian_true_ratio(sigma_s, sigma_t, x):
    """``p_T(x) / p_S(x)`` for centered Gaussians, evaluated in log-space.

    ``x`` may be a single d-vector (returns a float) or an ``n x d`` array.
    """
    ss = as_sym(sigma_s)
    st = as_sym(sigma_t)
    for name, m in (("sigma_s", ss), ("sigma_t", st)):
        try:
            np.linalg.cholesky(m)
        except np.linalg.LinAlgError:
            raise ValueError(f"{name} must be positive definite") from None
    xa = np.asarray(x, dtype=float)
    single = xa.ndim == 1
    xa = np.atleast_2d(xa)
    diff = np.linalg.inv(ss) - np.linalg.inv(st)
    logc = 0.5 * (np.linalg.slogdet(ss)[1] - np.linalg.slogdet(st)[1])
    quad = np.einsum("ij,jk,ik->i", xa, diff, xa)
    out = np.exp(logc + 0.5 * quad)
    return float(out[0]) if single else out


def gaussian_limit_covariance(sigma_s, sigma_t, noise_std: float) -> np.ndarray:
    """Limit covariance of ``sqrt(n)(beta_LS - beta*)`` with exact Gaussian ratio weights.

    For a linear truth, ``M = sigma^2 Sigma_T^{-1} E_T[w x x^T] Sigma_T^{-1}``
    and ``E_T[w x x^T] = |Sigma_S|^{1/2} / (|Sigma_T| |L|^{1/2}) L^{-1}`` with
    ``L = 2 Sigma_T^{-1} - Sigma_S^{-1}``, which must be positive definite
    (otherwise the weights have infinite second moment).
    """
    ss = as_sym(sigma_s)
    st = as_sym(sigma_t)
    st_inv = np.linalg.inv(st)
    lam = 2.0 * st_inv - np.linalg.inv(ss)
    try:
        np.linalg.cholesky(lam)
    except np.linalg.LinAlgError:
        raise ValueError("2 Sigma_T^{-1} - Sigma_S^{-1} is not positive definite") from None
    logc = 0.5 * np.linalg.slogdet(ss)[1] - np.linalg.slogdet(st)[1] - 0.5 * np.linalg.slogdet(lam)[1]
    ewxx = math.exp(logc) * np.linalg.inv(lam)
    return as_sym(noise_std**2 * st_inv @ ewxx @ st_inv)


# ---------------------------------------------------------------------------
# density ratio


@dataclass(frozen=True)
class DensityRatioModel:
    """Fitted score ``alpha(x) ≈ p_T / (p_S + p_T)``.

    Attributes
    ----------
    feature_map : {"linear", "quadratic", "rbf"}
    params : dict
        ``centers`` and ``bandwidth`` for the radial-basis map.
    coefficients : ndarray
    bucket_edges : ndarray
        Eleven decile edges of the fitted scores on the source sample.
    exponent : float
        Default reweighting exponent ``c`` in ``[0, 1]``.
    """

    feature_map: str
    params: dict = field(repr=False)
    coefficients: np.ndarray = field(repr=False)
    bucket_edges: np.ndarray = field(repr=False)
    exponent: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.exponent <= 1.0:
            raise ValueError("exponent must lie in [0, 1]")
        if np.any(np.diff(self.bucket_edges) < 0):
            raise ValueError("bucket edges must be non-decreasing")

    def features(self, x) -> np.ndarray:
        return _features(self.feature_map, self.params, x)

    def score(self, x) -> np.ndarray:
        """Clipped regression score in ``[1e-6, 1 - 1e-6]``."""
        return np.clip(self.features(x) @ self.coefficients, CLIP, 1.0 - CLIP)

    def ratio(self, x) -> np.ndarray:
        """Absolute ratio estimate ``1 / (1/alpha - 1)``."""
        a = self.score(x)
        return 1.0 / (1.0 / a - 1.0)


def _features(kind: str, params: dict, x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    one = np.ones((x.shape[0], 1))
    if kind == "linear":
        return np.hstack([one, x])
    if kind == "quadratic":
        iu = np.triu_indices(x.shape[1])
        quad = (x[:, :, None] * x[:, None, :])[:, iu[0], iu[1]]
        return np.hstack([one, x, quad])
    if kind == "rbf":
        c = params["centers"]
        sq = np.sum(x**2, 1)[:, None] + np.sum(c**2, 1)[None, :] - 2.0 * x @ c.T
        return np.hstack([one, np.exp(-np.clip(sq, 0.0, None) / (2.0 * params["bandwidth"] ** 2))])
    raise ValueError(f"unknown feature map {kind!r}")


def _rbf_params(xs, xu, n_centers, seed):
    # each sample's subsample depends only on (seed, its size), so swapping
    # the roles of the two samples yields the same center set
    k = max(n_centers // 2, 1)
    picks = []
    for x in (xs, xu):
        perm = make_rng((int(seed), x.shape[0])).permutation(x.shape[0])
        picks.append(x[np.sort(perm[: min(k, x.shape[0])])])
    centers = np.vstack(picks)
    diffs = centers[:, None, :] - centers[None, :, :]
    dist = np.sqrt(np.sum(diffs**2, axis=-1))
    off = dist[np.triu_indices(centers.shape[0], 1)]
    med = float(np.median(off)) if off.size else 0.0
    return {"centers": centers, "bandwidth": med if med > 0 else 1.0}


def fit_density_ratio(x_source, x_target_unlabeled, feature_map: str = "linear",
                      n_centers: int = N_CENTERS, seed=0) -> DensityRatioModel:
    """Regress the domain label (0 source, 1 target) on mapped features.

    Each class gets total weight one half (per-sample weight
    ``n / (2 n_class)``), so the population minimizer is
    ``p_T / (p_S + p_T)`` regardless of the sample sizes.
    """
    xs = np.atleast_2d(np.asarray(x_source, dtype=float))
    xu = np.atleast_2d(np.asarray(x_target_unlabeled, dtype=float))
    if xs.shape[0] == 0 or xu.shape[0] == 0:
        raise ValueError("both samples must be non-empty")
    if xs.shape[1] != xu.shape[1]:
        raise ValueError("source and target have different dimensions")
    params = _rbf_params(xs, xu, n_centers, seed) if feature_map == "rbf" else {}
    x = np.vstack([xs, xu])
    lab = np.concatenate([np.zeros(xs.shape[0]), np.ones(xu.shape[0])])
    n = x.shape[0]
    sw = np.concatenate([np.full(xs.shape[0], n / (2.0 * xs.shape[0])),
                         np.full(xu.shape[0], n / (2.0 * xu.shape[0]))])
    phi = _features(feature_map, params, x)
    root = np.sqrt(sw)
    coef, *_ = np.linalg.lstsq(phi * root[:, None], lab * root, rcond=None)
    scores = np.clip(_features(feature_map, params, xs) @ coef, CLIP, 1.0 - CLIP)
    edges = np.quantile(scores, np.linspace(0.0, 1.0, N_BUCKETS + 1))
    return DensityRatioModel(feature_map, params, coef, np.maximum.accumulate(edges))


def relative_weights(model: DensityRatioModel, x, exponent_c: float = None) -> WeightVector:
    """Decile levels ``1..10`` of the fitted score, raised to ``c``, mean one.

    Buckets hold equal counts by rank; ties in the score keep input order.
    With fewer than ten samples ``ceil(n/2)`` buckets are used.
    """
    c = model.exponent if exponent_c is None else float(exponent_c)
    if not 0.0 <= c <= 1.0:
        raise ValueError("exponent must lie in [0, 1]")
    s = model.score(x)
    n = s.shape[0]
    if n == 0:
        raise ValueError("no samples")
    buckets = N_BUCKETS
    if n < N_BUCKETS:
        buckets = math.ceil(n / 2)
        warnings.warn(f"only {n} samples; using {buckets} buckets", RuntimeWarning, stacklevel=2)
    order = np.argsort(s, kind="stable")
    ranks = np.empty(n, dtype=int)
    ranks[order] = np.arange(n)
    levels = ranks * buckets // n + 1
    return WeightVector(levels.astype(float) ** c)
