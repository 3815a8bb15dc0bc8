"""Synthetic experiment harness: configs, scenarios, tuning and aggregation.

Every replicate draws its data from Philox streams keyed by
``(base_seed, trial, stream)``. The same trial index is reused across grid
points, so neighbouring points of a sweep see common random numbers and
the curves are smooth. Hyperparameters are tuned on a labeled target
validation split that never reaches the fitting code.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .approx import estimate_m_hat, fit_density_ratio, relative_weights, weighted_least_squares
from .covshift import ridge_source, ridge_target, sufficient_statistic
from .mmsolve import SpectralProgram, solve_minimax_program
from .modelshift import fit_model_shift
from .numerics import sym_eig
from .riskeval import excess_risk
from .synth import (
    RNG_ALGORITHM,
    CovSpec,
    ReluNetwork,
    linear_labels,
    make_covariance,
    model_shift_delta,
    random_beta,
    random_orthogonal,
    rotate_basis,
    sample_gaussian_design,
)

__all__ = [
    "ConfigError",
    "ESTIMATORS",
    "ExperimentConfig",
    "ExperimentResult",
    "NumericalFailure",
    "ResultRow",
    "SCENARIOS",
    "cross_validate",
    "run_experiment",
]

SCENARIOS = (
    "spectrum_sweep",
    "signal_strength_sweep",
    "eigenspace_sweep",
    "model_shift_sweep",
    "relu_noise_sweep",
)
ESTIMATORS = (
    "minimax",
    "s_ridge",
    "t_ridge",
    "ols",
    "reweighted_ls",
    "ridge_source_only",
    "ridge_target_only",
)
_ALLOWED = {
    "spectrum_sweep": {"minimax", "s_ridge", "t_ridge", "ols"},
    "signal_strength_sweep": {"minimax", "s_ridge", "t_ridge", "ols"},
    "eigenspace_sweep": {"minimax", "s_ridge", "t_ridge", "ols"},
    "model_shift_sweep": {"minimax", "ridge_source_only", "ridge_target_only"},
    "relu_noise_sweep": {"minimax", "s_ridge", "reweighted_ls", "ols"},
}
_DEFAULT_ESTIMATORS = {
    "spectrum_sweep": ("minimax", "s_ridge", "t_ridge"),
    "signal_strength_sweep": ("minimax", "s_ridge", "t_ridge"),
    "eigenspace_sweep": ("minimax", "s_ridge", "t_ridge"),
    "model_shift_sweep": ("minimax", "ridge_source_only", "ridge_target_only"),
    "relu_noise_sweep": ("minimax", "s_ridge", "reweighted_ls", "ols"),
}
X_LABELS = {
    "spectrum_sweep": "source spectrum exponent alpha",
    "signal_strength_sweep": "normalized signal strength",
    "eigenspace_sweep": "eigenspace rotation angle",
    "model_shift_sweep": "model shift gamma / r",
    "relu_noise_sweep": "noise level sigma",
}
DEFAULT_HYPER = {
    "lam": tuple(float(v) for v in np.logspace(-4, 2, 25)),
    "r_mult": (0.25, 0.5, 1.0, 2.0, 4.0),
    "c": tuple(round(0.1 * k, 1) for k in range(11)),
}
SOLVER_GAP = 1e-4
FAIL_GAP = 1e-2

# per-trial stream ids
_S_BASIS, _S_BETA, _S_XS, _S_YS, _S_XU, _S_XV, _S_YV = range(7)
_S_XT, _S_YT, _S_DELTA, _S_NET, _S_BASIS2 = range(7, 12)


class ConfigError(ValueError):
    """Invalid or infeasible experiment configuration."""


class NumericalFailure(RuntimeError):
    """A solver could not certify a usable solution."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep.

    ``grid`` holds the swept values: spectrum exponents, normalized signal
    strengths in ``[0, 1]``, rotation angles, ``gamma / r`` ratios or noise
    levels, depending on ``scenario``. ``radius`` defaults to ``sqrt(dim)``.
    ``hyper_grid`` may override ``lam``, ``r_mult`` or ``c``.
    """

    scenario: str
    grid: tuple
    n_source: int = 2000
    n_target: int = 500
    n_unlabeled: int = 2000
    n_validation: int = 200
    dim: int = 50
    noise_std: float = 1.0
    radius: float = None
    replicates: int = 40
    base_seed: int = 0
    estimators: tuple = None
    hyper_grid: dict = field(default_factory=dict)
    source_alpha: float = 2.0
    target_alpha: float = 1.0
    sigma_t_known: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        grid = tuple(float(g) for g in np.atleast_1d(self.grid))
        if not grid:
            raise ConfigError("grid must be non-empty")
        object.__setattr__(self, "grid", grid)
        ests = _DEFAULT_ESTIMATORS[self.scenario] if self.estimators is None else tuple(self.estimators)
        if not ests:
            raise ConfigError("estimators must be non-empty")
        bad = [e for e in ests if e not in _ALLOWED[self.scenario]]
        if bad:
            raise ConfigError(f"estimators {bad} are not available in {self.scenario}")
        object.__setattr__(self, "estimators", ests)
        for name in ("n_source", "n_unlabeled", "n_validation", "dim", "replicates"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.scenario == "model_shift_sweep" and self.n_target < 1:
            raise ConfigError("model_shift_sweep needs n_target >= 1")
        if not self.noise_std >= 0:
            raise ConfigError("noise_std must be >= 0")
        if self.radius is None:
            object.__setattr__(self, "radius", math.sqrt(self.dim))
        if not self.radius >= 0:
            raise ConfigError("radius must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        hyper = dict(self.hyper_grid or {})
        unknown = set(hyper) - set(DEFAULT_HYPER)
        if unknown:
            raise ConfigError(f"unknown hyper_grid keys {sorted(unknown)}")
        for k, v in hyper.items():
            vals = tuple(float(x) for x in np.atleast_1d(v))
            if not vals:
                raise ConfigError(f"hyper_grid[{k!r}] must be non-empty")
            hyper[k] = vals
        if any(c < 0 or c > 1 for c in hyper.get("c", ())):
            raise ConfigError("reweighting exponents must lie in [0, 1]")
        object.__setattr__(self, "hyper_grid", hyper)
        if self.scenario == "signal_strength_sweep" and any(g < 0 or g > 1 for g in grid):
            raise ConfigError("signal strengths must lie in [0, 1]")
        if self.scenario in ("model_shift_sweep", "relu_noise_sweep") and any(g < 0 for g in grid):
            raise ConfigError("grid values must be >= 0")

    def hyper(self, key: str) -> tuple:
        return self.hyper_grid.get(key, DEFAULT_HYPER[key])

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "scenario" not in data or "grid" not in data:
            raise ConfigError("config needs 'scenario' and 'grid'")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["grid"] = list(self.grid)
        out["estimators"] = list(self.estimators)
        out["hyper_grid"] = {k: list(v) for k, v in sorted(self.hyper_grid.items())}
        return out


@dataclass(frozen=True)
class ResultRow:
    point: float
    estimator: str
    mean_risk: float
    std_error: float
    hyper: float


def _same(a: float, b: float) -> bool:
    return a == b or (math.isnan(a) and math.isnan(b))


@dataclass
class ExperimentResult:
    rows: list
    metadata: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, ExperimentResult) or len(self.rows) != len(other.rows):
            return False
        if self.metadata != other.metadata:
            return False
        for a, b in zip(self.rows, other.rows):
            if a.estimator != b.estimator:
                return False
            if not all(_same(x, y) for x, y in ((a.point, b.point), (a.mean_risk, b.mean_risk),
                                                (a.std_error, b.std_error), (a.hyper, b.hyper))):
                return False
        return True

    def series(self, estimator: str) -> list:
        return [r for r in self.rows if r.estimator == estimator]

    def lookup(self, point: float, estimator: str) -> ResultRow:
        for r in self.rows:
            if r.estimator == estimator and r.point == point:
                return r
        raise KeyError((point, estimator))


def cross_validate(fit_family, hyper_grid, x_val, y_val):
    """Grid value whose fit has the smallest validation mean squared error.

    ``fit_family(h)`` returns a coefficient vector. Ties go to the smallest
    grid value, so the answer does not depend on grid order.
    """
    vals = sorted({float(h) for h in hyper_grid})
    if not vals:
        raise ValueError("hyper_grid is empty")
    x = np.atleast_2d(np.asarray(x_val, dtype=float))
    y = np.asarray(y_val, dtype=float).reshape(-1)
    best, best_mse = None, math.inf
    for h in vals:
        beta = np.asarray(fit_family(h), dtype=float)
        mse = float(np.mean((y - x @ beta) ** 2))
        if mse < best_mse:
            best, best_mse = h, mse
    if best is None:
        raise NumericalFailure("no hyperparameter produced a finite validation error")
    return best


# ---------------------------------------------------------------------------
# data generation


@dataclass
class _Trial:
    sigma_s: np.ndarray
    sigma_t: np.ndarray
    x_s: np.ndarray
    y_s: np.ndarray
    x_u: np.ndarray
    x_v: np.ndarray
    y_v: np.ndarray
    beta_star: np.ndarray
    x_t: np.ndarray = None
    y_t: np.ndarray = None
    gamma: float = 0.0


def _seed(cfg, trial, stream):
    return (int(cfg.base_seed), int(trial), int(stream))


def _make_trial(cfg: ExperimentConfig, point: float, trial: int) -> _Trial:
    d = cfg.dim
    sc = cfg.scenario
    sigma = cfg.noise_std
    basis = random_orthogonal(d, _seed(cfg, trial, _S_BASIS))
    net = None
    gamma = 0.0
    if sc == "spectrum_sweep":
        sig_s = make_covariance(CovSpec(d, alpha=point), basis=basis)
        sig_t = make_covariance(CovSpec(d, alpha=cfg.target_alpha), basis=basis)
    elif sc == "eigenspace_sweep":
        sig_t = make_covariance(CovSpec(d, alpha=cfg.target_alpha), basis=basis)
        rotated = rotate_basis(basis, point, _seed(cfg, trial, _S_BASIS2))
        sig_s = make_covariance(CovSpec(d, alpha=cfg.source_alpha), basis=rotated)
    elif sc == "relu_noise_sweep":
        sigma = point
        ramp = tuple(float(i) for i in range(1, d + 1))
        sig_s = make_covariance(CovSpec(d, eigvals=ramp), basis=basis)
        other = random_orthogonal(d, _seed(cfg, trial, _S_BASIS2))
        sig_t = make_covariance(CovSpec(d, eigvals=tuple(1.0 / v for v in ramp)), basis=other)
        net = ReluNetwork.draw(d, _seed(cfg, trial, _S_NET))
    else:
        sig_s = make_covariance(CovSpec(d, alpha=cfg.source_alpha), basis=basis)
        sig_t = make_covariance(CovSpec(d, alpha=cfg.target_alpha), basis=basis)

    if net is not None:
        beta = net.best_linear()
    elif sc == "signal_strength_sweep":
        # ||Sigma_T beta||^2 / r^2 = t_min^2 + point (t_max^2 - t_min^2)
        dec = sym_eig(sig_t)
        beta = cfg.radius * (math.sqrt(point) * dec.basis[:, 0] + math.sqrt(1.0 - point) * dec.basis[:, -1])
    else:
        beta = random_beta(d, cfg.radius, _seed(cfg, trial, _S_BETA))

    def labels(x, stream, shift=None):
        if net is not None:
            y = net(x)
            if sigma > 0:
                y = y + linear_labels(x, np.zeros(d), sigma, _seed(cfg, trial, stream))
            return y
        b = beta if shift is None else beta + shift
        return linear_labels(x, b, sigma, _seed(cfg, trial, stream))

    x_s = sample_gaussian_design(cfg.n_source, sig_s, _seed(cfg, trial, _S_XS))
    delta = None
    if sc == "model_shift_sweep":
        gamma = point * cfg.radius
        delta = model_shift_delta(d, gamma, _seed(cfg, trial, _S_DELTA))
    y_s = labels(x_s, _S_YS, delta)
    x_u = sample_gaussian_design(cfg.n_unlabeled, sig_t, _seed(cfg, trial, _S_XU))
    x_v = sample_gaussian_design(cfg.n_validation, sig_t, _seed(cfg, trial, _S_XV))
    y_v = labels(x_v, _S_YV)
    tr = _Trial(sig_s, sig_t, x_s, y_s, x_u, x_v, y_v, beta, gamma=gamma)
    if sc == "model_shift_sweep":
        tr.x_t = sample_gaussian_design(cfg.n_target, sig_t, _seed(cfg, trial, _S_XT))
        tr.y_t = labels(tr.x_t, _S_YT)
    return tr


# ---------------------------------------------------------------------------
# estimators


def _check_solve(rep):
    if not math.isfinite(rep.objective) or rep.gap > FAIL_GAP * max(rep.objective, 1e-300):
        raise NumericalFailure(
            f"solver stopped with relative gap {rep.gap / max(rep.objective, 1e-300):.2e}"
        )


def _fit_all(cfg: ExperimentConfig, point: float, tr: _Trial, select) -> dict:
    """Fit every requested estimator on the training part of a trial.

    ``tr`` carries no validation split; ``select(family, grid)`` is the only
    route to it and returns the chosen grid value.
    """

    def _tuned(family, grid):
        h = select(family, grid)
        return family(h), h

    n_s = cfg.n_source
    sigma = point if cfg.scenario == "relu_noise_sweep" else cfg.noise_std
    # the fitting code only sees the noise level it would know in practice
    noise = max(sigma, 1e-12)
    geom = tr.sigma_t if cfg.sigma_t_known else tr.x_u.T @ tr.x_u / tr.x_u.shape[0]
    sig_s_hat = tr.x_s.T @ tr.x_s / n_s
    stat = sufficient_statistic(tr.x_s, tr.y_s, noise)
    lam_grid = cfg.hyper("lam")
    r_grid = cfg.hyper("r_mult")
    out = {}
    cache = {}

    def minimax_family(center, q):
        scale = float(np.linalg.norm(center))

        def fam(mult):
            if mult not in cache:
                prog = SpectralProgram(geom, q, mult * scale)
                rep = solve_minimax_program(prog, rel_gap=SOLVER_GAP)
                _check_solve(rep)
                cache[mult] = rep.coefficient @ center
            return cache[mult]

        return fam

    if cfg.scenario == "model_shift_sweep":
        n_t = tr.x_t.shape[0]
        stat_t = sufficient_statistic(tr.x_t, tr.y_t, noise)
        sig_t_hat = tr.x_t.T @ tr.x_t / n_t
        for est in cfg.estimators:
            if est == "ridge_source_only":
                fam = lambda lam: ridge_source(sig_s_hat, lam) @ stat.beta_ss  # noqa: E731
                out[est] = _tuned(fam, lam_grid)
            elif est == "ridge_target_only":
                fam = lambda lam: ridge_source(sig_t_hat, lam) @ stat_t.beta_ss  # noqa: E731
                out[est] = _tuned(fam, lam_grid)
            elif est == "minimax":
                scale = float(np.linalg.norm(stat.beta_ss))
                ms_cache = {}

                def fam(mult):
                    if mult not in ms_cache:
                        m = fit_model_shift(tr.x_s, tr.y_s, tr.x_t, tr.y_t, geom, noise,
                                            mult * scale, tr.gamma, rel_gap=SOLVER_GAP)
                        _check_solve(m.report)
                        ms_cache[mult] = m.beta_hat
                    return ms_cache[mult]

                out[est] = _tuned(fam, r_grid)
        return out

    if cfg.scenario == "relu_noise_sweep":
        need_w = "reweighted_ls" in cfg.estimators or "minimax" in cfg.estimators
        if need_w:
            model = fit_density_ratio(tr.x_s, tr.x_u, "quadratic")
            wcache = {}

            def weights(c):
                if c not in wcache:
                    wcache[c] = relative_weights(model, tr.x_s, c)
                return wcache[c]

            fam_w = lambda c: weighted_least_squares(tr.x_s, tr.y_s, weights(c))  # noqa: E731
            c_star = select(fam_w, cfg.hyper("c"))
        for est in cfg.estimators:
            if est == "ols":
                out[est] = (stat.beta_ss, math.nan)
            elif est == "s_ridge":
                fam = lambda lam: ridge_source(sig_s_hat, lam) @ stat.beta_ss  # noqa: E731
                out[est] = _tuned(fam, lam_grid)
            elif est == "reweighted_ls":
                out[est] = (fam_w(c_star), c_star)
            elif est == "minimax":
                w = weights(c_star)
                beta_ls = fam_w(c_star)
                # relative weights do not reproduce Sigma_T as the weighted Gram
                # matrix, so the sandwich bread is that Gram matrix itself
                wv = w.weights
                bread = (tr.x_s * wv[:, None]).T @ tr.x_s / n_s
                m_hat = estimate_m_hat(tr.x_s, tr.y_s, w, beta_ls, bread)
                fam = minimax_family(beta_ls, m_hat.m_hat / n_s)
                out[est] = _tuned(fam, r_grid)
        return out

    q = stat.covariance
    for est in cfg.estimators:
        if est == "ols":
            out[est] = (stat.beta_ss, math.nan)
        elif est == "s_ridge":
            fam = lambda lam: ridge_source(sig_s_hat, lam) @ stat.beta_ss  # noqa: E731
            out[est] = _tuned(fam, lam_grid)
        elif est == "t_ridge":
            fam = lambda lam: ridge_target(geom, lam) @ stat.beta_ss  # noqa: E731
            out[est] = _tuned(fam, lam_grid)
        elif est == "minimax":
            out[est] = _tuned(minimax_family(stat.beta_ss, q), r_grid)
    return out


def _run_trial(args):
    cfg, point, trial = args
    tr = _make_trial(cfg, point, trial)
    x_v, y_v = tr.x_v, tr.y_v
    train = replace(tr, x_v=None, y_v=None)
    fits = _fit_all(cfg, point, train, lambda fam, grid: cross_validate(fam, grid, x_v, y_v))
    return {e: (excess_risk(b, tr.beta_star, tr.sigma_t), h) for e, (b, h) in fits.items()}


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run every grid point and replicate, then aggregate mean and standard error.

    Risk is the exact target excess risk ``(b - beta*)^T Sigma_T (b - beta*)``
    against the population ``Sigma_T`` (for the ReLU truth, ``beta*`` is
    its best linear predictor). The reported hyperparameter is the median
    of the per-replicate choices: ``lambda`` for ridges, ``c`` for
    reweighting and the multiple of the statistic's norm for minimax.
    """
    cfg = config
    jobs = [(cfg, p, t) for p in cfg.grid for t in range(cfg.replicates)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outs = list(pool.map(_run_trial, jobs, chunksize=max(1, len(jobs) // (4 * cfg.workers))))
    else:
        outs = [_run_trial(j) for j in jobs]
    rows = []
    k = 0
    for p in cfg.grid:
        block = outs[k:k + cfg.replicates]
        k += cfg.replicates
        for est in cfg.estimators:
            risks = np.array([b[est][0] for b in block])
            hypers = np.array([b[est][1] for b in block])
            se = float(np.std(risks, ddof=1) / math.sqrt(len(risks))) if len(risks) > 1 else 0.0
            hyp = float(np.median(hypers)) if not np.all(np.isnan(hypers)) else math.nan
            rows.append(ResultRow(float(p), est, float(np.mean(risks)), se, hyp))
    meta = {
        "scenario": cfg.scenario,
        "x_label": X_LABELS[cfg.scenario],
        "rng": RNG_ALGORITHM,
        "config": json.dumps(cfg.to_dict(), sort_keys=True),
    }
    if cfg.scenario == "relu_noise_sweep":
        meta["relu_width"] = str(cfg.dim)
        meta["density_ratio_features"] = "quadratic"
    if cfg.scenario == "signal_strength_sweep":
        meta["signal_construction"] = "beta* mixes the top and bottom eigenvectors of Sigma_T"
    return ExperimentResult(rows, meta)
