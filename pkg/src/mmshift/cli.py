"""Command-line entry point.

Exit codes: 0 success, 2 configuration or argument error, 3 numerical
failure, 4 I/O error (missing, unreadable or malformed files).
"""
from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .approx import estimate_m_hat, fit_density_ratio, relative_weights, weighted_least_squares
from .covshift import ridge_source, ridge_target, sufficient_statistic
from .experiments import ConfigError, ExperimentConfig, NumericalFailure, run_experiment
from .mmsolve import SpectralProgram, solve_minimax_program
from .modelshift import fit_model_shift
from .numerics import NumericsError, as_sym, psd_pinv
from .plot import emit_plot
from .riskeval import separation_instance, worst_case_risk
from .tables import (
    DataFormatError,
    emit_csv,
    read_data_csv,
    read_matrix_csv,
    write_matrix_csv,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
METHODS = ("ols", "s_ridge", "t_ridge", "minimax", "reweighted_ls", "minimax_approx", "model_shift")
FEATURES = ("linear", "quadratic", "rbf")
_PROBLEM_KEYS = {"sigma_t", "radius", "noise_kernel", "sigma_s_hat", "n_source", "noise_std"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _emit_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _noise_estimate(x, y) -> float:
    n, d = x.shape
    beta = np.linalg.lstsq(x, y, rcond=None)[0]
    dof = max(n - d, 1)
    return float(math.sqrt(np.sum((y - x @ beta) ** 2) / dof))


def _converged_or_fail(rep) -> None:
    if not rep.converged:
        raise NumericalFailure(
            f"solver did not reach the requested gap (gap {rep.gap:.3e} after {rep.iterations} iterations)"
        )


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        text = fh.read()
    cfg = ExperimentConfig.from_json(text)
    if args.seed is not None:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "base_seed": args.seed})
    if args.workers is not None:
        cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "workers": args.workers})
    result = run_experiment(cfg)
    emit_csv(result, args.out)
    if args.plot:
        emit_plot(result, args.plot)
    return EXIT_OK


def cmd_estimate(args) -> int:
    x_s, y_s = read_data_csv(args.source)
    if y_s is None:
        raise ConfigError("source file needs a y column")
    x_u, _ = read_data_csv(args.unlabeled)
    d = x_s.shape[1]
    if x_u.shape[1] != d:
        raise ConfigError(f"unlabeled file has {x_u.shape[1]} features, source has {d}")
    x_t = y_t = None
    if args.target:
        x_t, y_t = read_data_csv(args.target)
        if x_t.shape[1] != d:
            raise ConfigError(f"target file has {x_t.shape[1]} features, source has {d}")
    n = x_s.shape[0]
    noise = args.noise_std if args.noise_std is not None else _noise_estimate(x_s, y_s)
    sig_s = x_s.T @ x_s / n
    sig_u = x_u.T @ x_u / x_u.shape[0]
    stat = sufficient_statistic(x_s, y_s, noise)
    radius = args.radius if args.radius is not None else float(np.linalg.norm(stat.beta_ss))
    info = {"method": args.method, "dim": d, "n_source": n, "noise_std": noise}
    coef = None
    m = args.method
    if args.coef_out and m in ("reweighted_ls", "model_shift"):
        raise ConfigError(f"method {m} has no single coefficient matrix on the source statistic")
    if m == "ols":
        coef = np.eye(d)
        beta = stat.beta_ss
    elif m == "s_ridge":
        coef = ridge_source(sig_s, args.lam)
        beta = coef @ stat.beta_ss
        info["lam"] = args.lam
    elif m == "t_ridge":
        coef = ridge_target(sig_u, args.lam)
        beta = coef @ stat.beta_ss
        info["lam"] = args.lam
    elif m == "minimax":
        rep = solve_minimax_program(SpectralProgram(sig_u, stat.covariance, radius))
        _converged_or_fail(rep)
        coef = rep.coefficient
        beta = coef @ stat.beta_ss
        info.update(radius=radius, worst_case_risk=rep.objective, iterations=rep.iterations)
    elif m in ("reweighted_ls", "minimax_approx"):
        model = fit_density_ratio(x_s, x_u, args.features, seed=args.seed)
        w = relative_weights(model, x_s, args.exponent)
        beta_ls = weighted_least_squares(x_s, y_s, w)
        info.update(features=args.features, exponent=args.exponent)
        beta = beta_ls
        if m == "minimax_approx":
            bread = (x_s * w.weights[:, None]).T @ x_s / n
            m_hat = estimate_m_hat(x_s, y_s, w, beta_ls, bread).m_hat
            r = args.radius if args.radius is not None else float(np.linalg.norm(beta_ls))
            rep = solve_minimax_program(SpectralProgram(sig_u, m_hat / n, r))
            _converged_or_fail(rep)
            coef = rep.coefficient
            beta = coef @ beta_ls
            info.update(radius=r, worst_case_risk=rep.objective)
    elif m == "model_shift":
        if x_t is None or y_t is None:
            raise ConfigError("model_shift needs a labeled --target file")
        if args.gamma is None:
            raise ConfigError("model_shift needs --gamma")
        est = fit_model_shift(x_s, y_s, x_t, y_t, sig_u, noise, radius, args.gamma)
        _converged_or_fail(est.report)
        beta = est.beta_hat
        info.update(radius=radius, gamma=args.gamma, relaxed_risk=est.report.objective)
    write_matrix_csv(args.out, np.asarray(beta).reshape(-1, 1), prefix="beta")
    if args.coef_out:
        write_matrix_csv(args.coef_out, coef)
    _emit_json(info)
    return EXIT_OK


def _matrix(value, name):
    try:
        m = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a numeric matrix") from None
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigError(f"{name} must be a square matrix")
    return as_sym(m)


def cmd_risk(args) -> int:
    c = read_matrix_csv(args.coef)
    with open(args.problem, encoding="utf-8") as fh:
        try:
            prob = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"problem file is not valid JSON: {exc}") from None
    if not isinstance(prob, dict):
        raise ConfigError("problem file must be a JSON object")
    unknown = set(prob) - _PROBLEM_KEYS
    if unknown:
        raise ConfigError(f"unknown problem keys {sorted(unknown)}")
    if "sigma_t" not in prob or "radius" not in prob:
        raise ConfigError("problem needs sigma_t and radius")
    sigma_t = _matrix(prob["sigma_t"], "sigma_t")
    if "noise_kernel" in prob:
        q = _matrix(prob["noise_kernel"], "noise_kernel")
    elif {"sigma_s_hat", "n_source", "noise_std"} <= set(prob):
        q = float(prob["noise_std"]) ** 2 / float(prob["n_source"]) * psd_pinv(
            _matrix(prob["sigma_s_hat"], "sigma_s_hat"))
    else:
        raise ConfigError("problem needs noise_kernel or sigma_s_hat, n_source and noise_std")
    d = sigma_t.shape[0]
    if c.shape != (d, d) or q.shape != (d, d):
        raise ConfigError(f"coefficient {c.shape} and matrices must all be {d}x{d}")
    rep = worst_case_risk(c, q, sigma_t, float(prob["radius"]))
    _emit_json({"bias_sq": rep.bias_sq, "variance": rep.variance, "total": rep.total})
    return EXIT_OK


def cmd_ratio(args) -> int:
    x_s, _ = read_data_csv(args.source)
    x_t, _ = read_data_csv(args.target)
    if x_s.shape[1] != x_t.shape[1]:
        raise ConfigError("source and target files have different feature counts")
    model = fit_density_ratio(x_s, x_t, args.features, seed=args.seed)
    alpha = model.score(x_s)
    ratio = model.ratio(x_s)
    w = relative_weights(model, x_s, args.exponent).weights
    write_matrix_csv(args.out, np.column_stack([alpha, ratio, w]), header=("alpha", "ratio", "weight"))
    return EXIT_OK


def cmd_separation(args) -> int:
    inst = separation_instance(args.dim, args.n)
    _emit_json({
        "dim": args.dim,
        "n": args.n,
        "d0": inst.d0,
        "minimax_risk": inst.minimax_risk,
        "ridge_floor": inst.ridge_floor,
        "ridge_lambda": inst.ridge_lambda,
        "ratio": inst.ratio,
        "quarter_root_bound": args.dim ** 0.25 / 2,
    })
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mmshift", description="Minimax linear estimation under distribution shift.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run a synthetic experiment sweep")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--plot")
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="fit an estimator on CSV data")
    e.add_argument("--source", required=True)
    e.add_argument("--unlabeled", required=True)
    e.add_argument("--target")
    e.add_argument("--method", required=True, choices=METHODS)
    e.add_argument("--out", required=True)
    e.add_argument("--coef-out")
    e.add_argument("--noise-std", type=float)
    e.add_argument("--radius", type=float)
    e.add_argument("--gamma", type=float)
    e.add_argument("--lam", type=float, default=1e-2)
    e.add_argument("--features", choices=FEATURES, default="quadratic")
    e.add_argument("--exponent", type=float, default=1.0)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_estimate)

    r = sub.add_parser("risk", help="worst-case risk of a coefficient matrix")
    r.add_argument("--coef", required=True)
    r.add_argument("--problem", required=True)
    r.set_defaults(func=cmd_risk)

    q = sub.add_parser("ratio", help="fit a density-ratio model and report weights")
    q.add_argument("--source", required=True)
    q.add_argument("--target", required=True)
    q.add_argument("--features", required=True, choices=FEATURES)
    q.add_argument("--out", required=True)
    q.add_argument("--exponent", type=float, default=1.0)
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=cmd_ratio)

    t = sub.add_parser("separation", help="evaluate the ridge/minimax separation instance")
    t.add_argument("--dim", type=int, required=True)
    t.add_argument("--n", type=int, required=True)
    t.set_defaults(func=cmd_separation)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (DataFormatError, OSError) as exc:
        print(f"mmshift: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalFailure, NumericsError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"mmshift: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"mmshift: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
