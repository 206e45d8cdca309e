"""Spatial dynamic panel models with endogenous time-varying weights.

Estimation by quasi-maximum likelihood with two-way fixed effects profiled
out, analytic incidental-parameter bias corrections, and score tests for
whether the weight-driving shocks feed back into the outcome equation.
"""

__version__ = "0.1.0"

from .core import (
    BlockIndex,
    Dims,
    EstimationError,
    InputError,
    PanelData,
    ParamVector,
    ell0,
    within_transform,
)
from .estimation import (
    FitOptions,
    FitResult,
    bias_correct,
    driver_regression,
    fit_full,
    fit_joint_null,
    fit_null_delta,
)
from .likelihood import (
    ScoreReport,
    bias_a1,
    bias_a2,
    concentrated_loglik,
    information_at_restricted,
    information_expected,
    masked_trace,
    residual_eps,
    residual_xi,
    score,
    score_report,
)
from .montecarlo import (
    McConfig,
    McResult,
    run_cell,
    run_grid,
    simulate_panel,
    timing_report,
)
from .oracle import DenseModel, dense_check, fd_gradient, fd_hessian
from .tests import (
    TestResult,
    chi2_critical,
    chi2_pvalue,
    clm,
    corrected_score_delta,
    corrected_score_eta,
    noncentrality,
    rs_robust,
    rs_standard,
)
from .weights import (
    BlockOperator,
    WeightSequence,
    apply_block,
    build_weight_sequence,
    compose_weights,
    economic_kernel,
    grid_contiguity,
    log_det_S,
    row_normalize,
    solve_s,
    spectral_guard,
)

__all__ = [
    "BlockIndex",
    "BlockOperator",
    "DenseModel",
    "Dims",
    "EstimationError",
    "FitOptions",
    "FitResult",
    "InputError",
    "McConfig",
    "McResult",
    "PanelData",
    "ParamVector",
    "ScoreReport",
    "TestResult",
    "WeightSequence",
    "apply_block",
    "bias_a1",
    "bias_a2",
    "bias_correct",
    "build_weight_sequence",
    "chi2_critical",
    "chi2_pvalue",
    "clm",
    "compose_weights",
    "concentrated_loglik",
    "corrected_score_delta",
    "corrected_score_eta",
    "dense_check",
    "driver_regression",
    "economic_kernel",
    "ell0",
    "fd_gradient",
    "fd_hessian",
    "fit_full",
    "fit_joint_null",
    "fit_null_delta",
    "grid_contiguity",
    "information_at_restricted",
    "information_expected",
    "log_det_S",
    "masked_trace",
    "noncentrality",
    "residual_eps",
    "residual_xi",
    "rs_robust",
    "rs_standard",
    "row_normalize",
    "run_cell",
    "run_grid",
    "score",
    "score_report",
    "simulate_panel",
    "solve_s",
    "spectral_guard",
    "timing_report",
    "within_transform",
]
