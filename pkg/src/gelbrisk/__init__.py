"""Distributionally robust risk measurement over mean-covariance balls.

The package models distributional ambiguity as a ball, in the Gelbrich
distance, around an estimated mean-covariance pair.  It provides

- the Gelbrich metric with Monte-Carlo / SDP certificates (:mod:`.metric`),
- finite-sample radius calibration (:mod:`.calibration`),
- standard risk coefficients for VaR/CVaR/spectral/distortion families
  (:mod:`.coefficients`),
- closed-form worst-case risk of linear portfolios and the moments attaining
  it (:mod:`.linear_risk`),
- support functions of the induced moment uncertainty sets (:mod:`.support`),
- a small standard-form SDP layer with an ADMM solver, SDPA-sparse export and
  robustified program builders for nonlinear losses (:mod:`.sdp`),
- portfolio selection by projected subgradient descent (:mod:`.optimize`),
- a rolling index-tracking backtest and its command-line front end
  (:mod:`.backtest`, :mod:`.cli`).

Everything user-facing is importable from the top level; the submodules
remain the canonical homes and hold the full docstrings.  Exceptions all
derive from :class:`.errors.GelbriskError`, with input problems under
:class:`.errors.ValidationError` and numerical failures under
:class:`.errors.SolverError`.
"""

from .backtest import (
    BacktestConfig,
    BacktestResult,
    ReturnPanel,
    load_returns_csv,
    rolling_backtest,
)
from .calibration import (
    CalibrationParams,
    empirical_moments,
    radius_from_moment_bounds,
    subgaussian_radius,
)
from .cli import cli_dispatch, main
from .coefficients import (
    CVaR,
    Distortion,
    Kusuoka,
    MeanStd,
    MeanVariance,
    PiecewiseFn,
    PiecewiseLinear,
    RiskMeasure,
    Spectral,
    StepFunction,
    StructuralClass,
    VaR,
    cvar_distortion,
    cvar_spectrum,
    distortion_alpha,
    gaussian_inverse_cdf,
    kusuoka_alpha,
    piecewise_from_json,
    piecewise_to_json,
    spectral_alpha,
    standard_risk_coefficient,
    var_distortion,
)
from .errors import GelbriskError, SolverError, ValidationError
from .linalg import EigenDecomp, psd_project, sqrtm_psd, sym_eig, sym_matrix
from .linear_risk import (
    GelbrichBall,
    LinearRiskReport,
    gelbrich_meanvariance_risk,
    gelbrich_risk_linear,
    worst_case_moments_linear,
    worst_case_moments_meanvariance,
)
from .metric import (
    AffineMap,
    MomentPair,
    gaussian_coupling_cost,
    gelbrich_distance,
    gelbrich_distance_mahalanobis,
    gelbrich_sq_sdp_oracle,
    optimal_pushforward_map,
)
from .optimize import (
    FeasibleSet,
    OptimizeReport,
    Termination,
    minimize_linear_gelbrich,
    minimize_tracking,
)
from .sdp import (
    LmiProgram,
    SdpProblem,
    SdpSolution,
    SolveStatus,
    admm_solve,
    build_piecewise_quadratic_expectation,
    build_poly_cvar,
    build_poly_var,
    build_quad_cvar,
    build_quad_var,
    build_tracking_error,
    build_wc_expectation,
    build_wc_probability,
    export_sdpa,
    parse_sdpa,
)
from .support import (
    SupportQuery,
    SupportResult,
    support_U,
    support_U_sdp,
    support_V,
    support_V_sdp,
)

__version__ = "0.1.0"

__all__ = [
    "AffineMap",
    "BacktestConfig",
    "BacktestResult",
    "CVaR",
    "CalibrationParams",
    "Distortion",
    "EigenDecomp",
    "FeasibleSet",
    "GelbrichBall",
    "GelbriskError",
    "Kusuoka",
    "LinearRiskReport",
    "LmiProgram",
    "MeanStd",
    "MeanVariance",
    "MomentPair",
    "OptimizeReport",
    "PiecewiseFn",
    "PiecewiseLinear",
    "ReturnPanel",
    "RiskMeasure",
    "SdpProblem",
    "SdpSolution",
    "SolveStatus",
    "SolverError",
    "Spectral",
    "StepFunction",
    "StructuralClass",
    "SupportQuery",
    "SupportResult",
    "Termination",
    "VaR",
    "ValidationError",
    "admm_solve",
    "build_piecewise_quadratic_expectation",
    "build_poly_cvar",
    "build_poly_var",
    "build_quad_cvar",
    "build_quad_var",
    "build_tracking_error",
    "build_wc_expectation",
    "build_wc_probability",
    "cli_dispatch",
    "cvar_distortion",
    "cvar_spectrum",
    "distortion_alpha",
    "empirical_moments",
    "export_sdpa",
    "gaussian_coupling_cost",
    "gaussian_inverse_cdf",
    "gelbrich_distance",
    "gelbrich_distance_mahalanobis",
    "gelbrich_meanvariance_risk",
    "gelbrich_risk_linear",
    "gelbrich_sq_sdp_oracle",
    "kusuoka_alpha",
    "load_returns_csv",
    "main",
    "minimize_linear_gelbrich",
    "minimize_tracking",
    "optimal_pushforward_map",
    "parse_sdpa",
    "piecewise_from_json",
    "piecewise_to_json",
    "psd_project",
    "radius_from_moment_bounds",
    "rolling_backtest",
    "spectral_alpha",
    "sqrtm_psd",
    "standard_risk_coefficient",
    "subgaussian_radius",
    "support_U",
    "support_U_sdp",
    "support_V",
    "support_V_sdp",
    "sym_eig",
    "sym_matrix",
    "var_distortion",
    "worst_case_moments_linear",
    "worst_case_moments_meanvariance",
    "__version__",
]
