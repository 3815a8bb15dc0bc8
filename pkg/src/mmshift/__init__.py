"""Near-minimax linear estimators for regression under covariate and model shift."""
from .covshift import (
    ShiftProblem,
    minimax_commutative,
    ridge_source,
    ridge_target,
    sufficient_statistic,
    waterfill_lambda,
)
from .kernels import BACKEND
from .mmsolve import SpectralProgram, solve_minimax_program, solve_model_shift_program
from .modelshift import fit_model_shift
from .riskeval import excess_risk, separation_instance, worst_case_risk

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ShiftProblem",
    "SpectralProgram",
    "excess_risk",
    "fit_model_shift",
    "minimax_commutative",
    "ridge_source",
    "ridge_target",
    "separation_instance",
    "solve_minimax_program",
    "solve_model_shift_program",
    "sufficient_statistic",
    "waterfill_lambda",
    "worst_case_risk",
]
