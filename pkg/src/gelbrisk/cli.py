"""Command-line surface over the risk, calibration, and backtest layers.

Every subcommand reads plain text: risk measures as compact
``name:parameter`` specs, moment balls and feasible sets as JSON (inline
or ``@path`` to a file), vectors as comma-separated numbers, and panels
as the CSV layout of :func:`gelbrisk.backtest.load_returns_csv`.
Numeric results are printed as JSON (or a bare number where the result
is one) at full decimal precision.

Exit codes: 0 on success, 2 on validation or input errors, 3 when a
conic solve stops without an optimal status.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .backtest import BacktestConfig, load_returns_csv, rolling_backtest
from .calibration import CalibrationParams, empirical_moments, subgaussian_radius
from .coefficients import (
    CVaR,
    Distortion,
    Kusuoka,
    MeanStd,
    MeanVariance,
    Spectral,
    StructuralClass,
    VaR,
    piecewise_from_json,
    standard_risk_coefficient,
)
from .errors import GelbriskError, IoError, ParseError, SolverError
from .linear_risk import GelbrichBall, gelbrich_risk_linear, worst_case_moments_linear
from .metric import MomentPair
from .optimize import FeasibleSet, minimize_linear_gelbrich
from .sdp import SdpProblem, SolveStatus, admm_solve, export_sdpa

__all__ = ["cli_dispatch", "main"]


# ---------------------------------------------------------------------------
# Argument decoding
# ---------------------------------------------------------------------------


def _read_text_arg(value: str, what: str) -> str:
    """Return ``value`` itself, or the contents of a file for ``@path``."""
    if not value.startswith("@"):
        return value
    path = value[1:]
    try:
        with open(path, encoding="utf-8") as handle:
            return handle.read()
    except OSError as exc:
        raise IoError(f"{what}: could not read {path}: {exc}") from exc


def _json_arg(value: str, what: str):
    text = _read_text_arg(value, what)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{what}: invalid JSON ({exc})") from None


def _vector_arg(value: str, what: str) -> np.ndarray:
    parts = [p.strip() for p in value.split(",")]
    try:
        return np.array([float(p) for p in parts])
    except ValueError:
        raise ParseError(f"{what}: expected comma-separated numbers, got {value!r}") from None


def _require_keys(obj, keys, what: str) -> None:
    if not isinstance(obj, dict):
        raise ParseError(f"{what}: expected a JSON object, got {type(obj).__name__}")
    missing = [k for k in keys if k not in obj]
    if missing:
        raise ParseError(f"{what}: missing keys {missing}")


def _ball_arg(value: str, weight_path: str | None = None) -> GelbrichBall:
    spec = _json_arg(value, "--ball")
    _require_keys(spec, ("mean", "cov", "radius"), "--ball")
    weight = spec.get("weight")
    if weight_path is not None:
        weight = _json_arg("@" + weight_path, "--mahalanobis")
    return GelbrichBall(
        MomentPair(np.asarray(spec["mean"], dtype=float), np.asarray(spec["cov"], dtype=float)),
        float(spec["radius"]),
        weight=None if weight is None else np.asarray(weight, dtype=float),
    )


def _feasible_arg(value: str) -> FeasibleSet:
    spec = _json_arg(value, "--feasible")
    _require_keys(spec, ("kind",), "--feasible")
    kind = str(spec["kind"]).lower().replace("_", "-")
    if kind == "simplex":
        _require_keys(spec, ("n",), "--feasible")
        return FeasibleSet.simplex(int(spec["n"]), spec.get("lower", 0.0))
    if kind in ("tracking-simplex", "fixed-index-simplex"):
        _require_keys(spec, ("n",), "--feasible")
        return FeasibleSet.tracking_simplex(int(spec["n"]))
    if kind == "box-budget":
        _require_keys(spec, ("lower", "upper"), "--feasible")
        return FeasibleSet.box_budget(
            spec["lower"], spec["upper"], float(spec.get("budget", 1.0))
        )
    raise ParseError(
        f"--feasible: unknown kind {spec['kind']!r} "
        "(expected simplex, tracking-simplex, or box-budget)"
    )


_CLASS_TAGS = {
    "alll2": StructuralClass.ALL_L2,
    "symmetric": StructuralClass.SYMMETRIC,
    "symmetriclinearunimodal": StructuralClass.SYMMETRIC_LINEAR_UNIMODAL,
    "gaussian": StructuralClass.GAUSSIAN,
}


def _class_arg(tag: str) -> StructuralClass:
    key = tag.lower().replace("-", "").replace("_", "")
    if key not in _CLASS_TAGS:
        raise ParseError(
            f"--class: unknown structural class {tag!r} "
            "(expected all-l2, symmetric, symmetric-linear-unimodal, or gaussian)"
        )
    return _CLASS_TAGS[key]


def _risk_arg(spec: str):
    """Decode ``name:parameter`` risk specs.

    ``var:b``, ``cvar:b``, ``mean-std:b`` and ``mean-variance:b`` take a
    number; ``spectral:``, ``kusuoka:`` and ``distortion:`` take JSON (a
    piecewise function, or a list of them for kusuoka), inline or
    ``@path``.
    """
    name, sep, arg = spec.partition(":")
    if not sep:
        raise ParseError(f"--risk: expected name:parameter, got {spec!r}")
    name = name.strip().lower()
    if name in ("var", "cvar", "mean-std", "mean-variance"):
        try:
            beta = float(arg)
        except ValueError:
            raise ParseError(f"--risk: {arg!r} is not a number") from None
        ctor = {"var": VaR, "cvar": CVaR, "mean-std": MeanStd, "mean-variance": MeanVariance}
        return ctor[name](beta)
    if name == "spectral":
        return Spectral(piecewise_from_json(_read_text_arg(arg, "--risk")))
    if name == "kusuoka":
        items = _json_arg(arg, "--risk")
        if not isinstance(items, list):
            raise ParseError("--risk: kusuoka takes a JSON list of spectra")
        return Kusuoka(tuple(piecewise_from_json(json.dumps(item)) for item in items))
    if name == "distortion":
        return Distortion(piecewise_from_json(_read_text_arg(arg, "--risk")))
    raise ParseError(
        f"--risk: unknown risk measure {name!r} "
        "(expected var, cvar, mean-std, mean-variance, spectral, kusuoka, or distortion)"
    )


def _pair_json(pair: MomentPair) -> dict:
    return {"mean": pair.mean.tolist(), "cov": pair.cov.tolist()}


def _emit(payload) -> None:
    print(json.dumps(payload, indent=2))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_alpha(args) -> int:
    value = standard_risk_coefficient(_risk_arg(args.risk), _class_arg(args.structural_class))
    print(f"{value:.17g}")
    return 0


def _cmd_risk(args) -> int:
    ball = _ball_arg(args.ball, args.mahalanobis)
    report = gelbrich_risk_linear(ball, _vector_arg(args.w, "--w"), args.alpha)
    _emit(
        {
            "value": report.value,
            "nominal": report.nominal,
            "deviation": report.deviation,
            "robustness": report.robustness,
            "worst_case": None if report.worst_case is None else _pair_json(report.worst_case),
        }
    )
    return 0


def _cmd_worst_case(args) -> int:
    ball = _ball_arg(args.ball)
    pair = worst_case_moments_linear(ball, _vector_arg(args.w, "--w"), args.alpha)
    _emit(_pair_json(pair))
    return 0


def _cmd_calibrate(args) -> int:
    panel = load_returns_csv(args.data)
    pair = empirical_moments(panel.returns)
    params = CalibrationParams()
    if args.constants is not None:
        spec = _json_arg(args.constants, "--constants")
        if not isinstance(spec, dict):
            raise ParseError("--constants: expected a JSON object")
        try:
            params = CalibrationParams(**spec)
        except TypeError as exc:
            raise ParseError(f"--constants: {exc}") from None
    radius = subgaussian_radius(args.eta, panel.n_periods, pair.mean, pair.cov, params)
    _emit({"mean": pair.mean.tolist(), "cov": pair.cov.tolist(), "radius": radius})
    return 0


def _cmd_optimize(args) -> int:
    report = minimize_linear_gelbrich(
        _ball_arg(args.ball),
        args.alpha,
        _feasible_arg(args.feasible),
        max_iter=args.max_iter,
    )
    _emit(
        {
            "w_star": report.w_star.tolist(),
            "value": report.value,
            "iterations": report.iterations,
            "termination": report.termination.value,
        }
    )
    return 0


def _cmd_backtest(args) -> int:
    panel = load_returns_csv(args.data)
    cfg = BacktestConfig(
        rho_grid=tuple(_vector_arg(args.rho_grid, "--rho-grid")),
        p=args.p,
        window=args.window,
        block=args.block,
        index_column=args.index_column,
    )
    text = rolling_backtest(panel, cfg).curve_csv()
    if args.out is None:
        sys.stdout.write(text)
    else:
        try:
            with open(args.out, "w", encoding="utf-8", newline="") as handle:
                handle.write(text)
        except OSError as exc:
            raise IoError(f"could not write {args.out}: {exc}") from exc
    return 0


def _problem_arg(value: str) -> SdpProblem:
    spec = _json_arg(value, "--problem")
    _require_keys(spec, ("blocks", "c", "constraints"), "--problem")
    blocks = tuple(int(d) for d in spec["blocks"])

    def shaped(raw, label):
        arrays = [np.asarray(entry, dtype=float) for entry in raw]
        if len(arrays) != len(blocks):
            raise ParseError(f"--problem: {label} lists {len(arrays)} blocks, expected {len(blocks)}")
        return tuple(arrays)

    constraints = []
    for i, item in enumerate(spec["constraints"]):
        _require_keys(item, ("mats", "rhs"), f"--problem constraint {i + 1}")
        constraints.append((shaped(item["mats"], f"constraint {i + 1}"), float(item["rhs"])))
    return SdpProblem(
        blocks=blocks,
        c=shaped(spec["c"], "cost"),
        constraints=tuple(constraints),
        obj_offset=float(spec.get("offset", 0.0)),
    )


def _cmd_sdp_export(args) -> int:
    export_sdpa(_problem_arg(args.problem), args.out)
    return 0


def _cmd_sdp_solve(args) -> int:
    solution = admm_solve(_problem_arg(args.problem), tol=args.tol, max_iter=args.max_iter)
    _emit(
        {
            "status": solution.status.value,
            "value": solution.value,
            "primal_residual": solution.primal_residual,
            "dual_residual": solution.dual_residual,
        }
    )
    return 0 if solution.status is SolveStatus.OPTIMAL else 3


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gelbrisk",
        description="Moment-robust risk measurement and portfolio tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    alpha = sub.add_parser("alpha", help="standard risk coefficient of a (risk, class) pair")
    alpha.add_argument("--risk", required=True, help="risk spec, e.g. cvar:0.05 or spectral:@fn.json")
    alpha.add_argument(
        "--class",
        dest="structural_class",
        required=True,
        help="all-l2 | symmetric | symmetric-linear-unimodal | gaussian",
    )
    alpha.set_defaults(handler=_cmd_alpha)

    risk = sub.add_parser("risk", help="closed-form worst-case risk of a portfolio")
    risk.add_argument("--ball", required=True, help='JSON {"mean","cov","radius"} or @file')
    risk.add_argument("--w", required=True, help="portfolio as comma-separated numbers")
    risk.add_argument("--alpha", required=True, type=float, help="standard risk coefficient")
    risk.add_argument("--mahalanobis", default=None, help="JSON file with the metric weight matrix")
    risk.set_defaults(handler=_cmd_risk)

    worst = sub.add_parser("worst-case", help="moments attaining the worst-case linear risk")
    worst.add_argument("--ball", required=True, help='JSON {"mean","cov","radius"} or @file')
    worst.add_argument("--w", required=True, help="portfolio as comma-separated numbers")
    worst.add_argument("--alpha", required=True, type=float, help="standard risk coefficient")
    worst.set_defaults(handler=_cmd_worst_case)

    calibrate = sub.add_parser("calibrate", help="empirical moments and confidence radius of a panel")
    calibrate.add_argument("--data", required=True, help="CSV return panel")
    calibrate.add_argument("--eta", required=True, type=float, help="significance level in (0, 1]")
    calibrate.add_argument("--constants", default=None, help="JSON overrides for the concentration constants")
    calibrate.set_defaults(handler=_cmd_calibrate)

    optimize = sub.add_parser("optimize", help="minimize the worst-case linear risk over a feasible set")
    optimize.add_argument("--ball", required=True, help='JSON {"mean","cov","radius"} or @file')
    optimize.add_argument("--alpha", required=True, type=float, help="standard risk coefficient")
    optimize.add_argument("--feasible", required=True, help='JSON feasible-set spec or @file')
    optimize.add_argument("--max-iter", type=int, default=10_000, help="iteration cap")
    optimize.set_defaults(handler=_cmd_optimize)

    backtest = sub.add_parser("backtest", help="rolling tracking backtest; writes the per-radius error curve")
    backtest.add_argument("--data", required=True, help="CSV return panel (index in the last column by default)")
    backtest.add_argument("--p", type=int, default=2, choices=(1, 2), help="tracking-error exponent")
    backtest.add_argument("--rho-grid", required=True, help="comma-separated radii")
    backtest.add_argument("--window", type=int, default=52, help="estimation window length")
    backtest.add_argument("--block", type=int, default=12, help="rebalancing block length")
    backtest.add_argument("--index-column", default=None, help="name of the index column")
    backtest.add_argument("--out", default=None, help="output CSV path (stdout when omitted)")
    backtest.set_defaults(handler=_cmd_backtest)

    sdp = sub.add_parser("sdp", help="export or solve a conic problem")
    sdp_sub = sdp.add_subparsers(dest="sdp_command", required=True)

    export = sdp_sub.add_parser("export", help="write a problem in sparse SDPA format")
    export.add_argument("--problem", required=True, help="JSON problem description or @file")
    export.add_argument("--out", required=True, help="destination .dat-s path")
    export.set_defaults(handler=_cmd_sdp_export)

    solve = sdp_sub.add_parser("solve", help="solve a problem with the splitting method")
    solve.add_argument("--problem", required=True, help="JSON problem description or @file")
    solve.add_argument("--tol", type=float, default=1e-6, help="residual tolerance")
    solve.add_argument("--max-iter", type=int, default=200_000, help="iteration cap")
    solve.set_defaults(handler=_cmd_sdp_solve)

    return parser


def cli_dispatch(argv=None) -> int:
    """Parse ``argv`` and run one subcommand, mapping errors to exit codes."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return int(code) if code is not None else 0
    try:
        return args.handler(args)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except GelbriskError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
