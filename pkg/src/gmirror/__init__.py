"""Gaussian-mirror variable selection with false discovery rate control."""
from .errors import (
    BootstrapError, ConstantColumnError, ConvergenceError, DegeneratePerturbationError,
    GaussianMirrorError, GeometryError, InconsistentEventError, InvalidIntervalError,
    InvalidKError, ParseError, ReplicateFailureError, SingularDesignError, SpecError,
)
from .fd import FdInterval, bootstrap_fd, fd_hat
from .lasso import (
    LassoFit, cross_validate_lambda, kkt_violation, lambda_grid, lambda_max, lasso_fit,
    theoretical_lambda,
)
from .linalg import QRFactor, RegressionProblem, least_squares, project_out, standardize, thin_qr
from .ols import MirrorProfile, compute_cj_ols, mirror_one_feature, mirror_profiles, mirror_statistic, run_gm_ols
from .postselect import (
    LassoOptions, MirrorGeometry, SelectionEvent, TruncationBox, build_selection_event,
    compute_cj_post, mirror_geometry, mirror_statistic_post, run_gm_lasso, truncation_box,
)
from .selection import SelectionReport, fdp_hat, select_threshold
from .sim import (
    DesignSpec, EvalResult, ExperimentTable, TruthSpec, bh_datasplit, bh_marginal, bh_stepup,
    bh_zstat, evaluate, generate_design, generate_truth, run_experiment,
)
from .truncnorm import normal_score, truncated_normal_cdf, truncated_normal_sf

__version__ = "0.1.0"

__all__ = [
    "BootstrapError", "ConstantColumnError", "ConvergenceError", "DegeneratePerturbationError",
    "DesignSpec", "EvalResult", "ExperimentTable", "FdInterval", "GaussianMirrorError",
    "GeometryError", "InconsistentEventError", "InvalidIntervalError", "InvalidKError", "LassoFit",
    "LassoOptions", "MirrorGeometry", "MirrorProfile", "ParseError", "QRFactor",
    "RegressionProblem", "ReplicateFailureError", "SelectionEvent", "SelectionReport",
    "SingularDesignError", "SpecError", "TruncationBox", "TruthSpec", "bh_datasplit", "bh_marginal",
    "bh_stepup", "bh_zstat", "bootstrap_fd", "build_selection_event", "compute_cj_ols",
    "compute_cj_post", "cross_validate_lambda", "evaluate", "fd_hat", "fdp_hat", "generate_design",
    "generate_truth", "kkt_violation", "lambda_grid", "lambda_max", "lasso_fit", "least_squares",
    "mirror_geometry", "mirror_one_feature", "mirror_profiles", "mirror_statistic",
    "mirror_statistic_post", "normal_score", "project_out", "run_experiment", "run_gm_lasso",
    "run_gm_ols", "select_threshold", "standardize", "theoretical_lambda", "thin_qr",
    "truncated_normal_cdf", "truncated_normal_sf", "truncation_box",
]
