"""Estimation when the regression parameter itself shifts between domains.

Source labels follow ``beta_T + delta`` with ``||delta|| <= gamma`` and target
labels follow ``beta_T``. Each domain contributes its own least-squares
statistic, and the two are combined by the coefficient pair of the relaxed
minimax program.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .covshift import sufficient_statistic
from .mmsolve import ModelShiftReport, solve_model_shift_program

__all__ = ["ModelShiftEstimator", "fit_model_shift", "predict"]


@dataclass(frozen=True)
class ModelShiftEstimator:
    """Coefficients ``(A1, A2)`` and the fitted statistics.

    ``beta_hat`` is ``A1 @ beta_bar_s + A2 @ beta_bar_t``.
    """

    a1: np.ndarray = field(repr=False)
    a2: np.ndarray = field(repr=False)
    radius_r: float
    radius_gamma: float
    beta_bar_s: np.ndarray = field(default=None, repr=False)
    beta_bar_t: np.ndarray = field(default=None, repr=False)
    report: ModelShiftReport = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("a1", "a2"):
            m = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if not np.all(np.isfinite(m)):
                raise ValueError(f"{name} has non-finite entries")
            object.__setattr__(self, name, m)

    @property
    def beta_hat(self) -> np.ndarray:
        if self.beta_bar_s is None or self.beta_bar_t is None:
            raise ValueError("estimator was built without fitted statistics")
        return predict(self, self.beta_bar_s, self.beta_bar_t)


def predict(est: ModelShiftEstimator, beta_bar_s, beta_bar_t) -> np.ndarray:
    """``A1 @ beta_bar_s + A2 @ beta_bar_t``."""
    bs = np.asarray(beta_bar_s, dtype=float).reshape(-1)
    bt = np.asarray(beta_bar_t, dtype=float).reshape(-1)
    d = est.a1.shape[0]
    if bs.shape[0] != d or bt.shape[0] != d:
        raise ValueError(f"statistics must have length {d}")
    return est.a1 @ bs + est.a2 @ bt


def fit_model_shift(x_s, y_s, x_t, y_t, sigma_t, noise_std: float, radius_r: float,
                    radius_gamma: float, weight_variance: bool = True, **solver_kw) -> ModelShiftEstimator:
    """Fit both per-domain statistics and solve for ``(A1, A2)``.

    ``sigma_t`` sets the loss geometry: the population target second
    moment if known, an unlabeled-sample estimate otherwise.
    """
    x_s = np.atleast_2d(np.asarray(x_s, dtype=float))
    x_t = np.atleast_2d(np.asarray(x_t, dtype=float))
    if x_s.shape[0] < 1 or x_t.shape[0] < 1 or np.size(x_t) == 0:
        raise ValueError("model-shift fitting needs labeled samples from both domains")
    stat_s = sufficient_statistic(x_s, y_s, noise_std)
    stat_t = sufficient_statistic(x_t, y_t, noise_std)
    n_s, n_t = x_s.shape[0], x_t.shape[0]
    rep = solve_model_shift_program(
        x_s.T @ x_s / n_s, x_t.T @ x_t / n_t, sigma_t, n_s, n_t, noise_std,
        radius_r, radius_gamma, weight_variance=weight_variance, **solver_kw,
    )
    return ModelShiftEstimator(rep.a1, rep.a2, radius_r, radius_gamma,
                               stat_s.beta_ss, stat_t.beta_ss, rep)
