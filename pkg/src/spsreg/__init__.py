"""Semiparametric penalized spline regression with guided model selection.

The centerpiece is the two stage estimator: fit a parametric guide by least
squares, smooth the corrected residuals with a penalized B-spline, and
recombine. Around it sit the plain penalized spline smoother, local
polynomial competitors, the asymptotic bias/variance formulas, a
bias-comparison model selector, and a Monte Carlo study runner with a CLI.
"""

__version__ = "0.1.0"

from .basis import BSplineBasis, difference_penalty, polynomial_coefficients
from .exceptions import (
    BandwidthError,
    DegenerateFitError,
    DomainError,
    PositivityError,
    RankDeficiencyError,
    SelectionError,
)
from .kernel import (
    LocalPolynomialRegression,
    SemiparametricLocalLinear,
    default_bandwidth_grid,
    pilot_bandwidth_grid,
)
from .parametric import (
    FittedParametricModel,
    ParametricFamily,
    aic,
    fit_ols,
    model_library,
    parse_family,
    resolve_family,
    tic,
)
from .selection import SelectionReport, count_criteria, l_hat_a, l_hat_lambda
from .semiparametric import SemiparametricSplineEstimator
from .simulate import (
    ArmSpec,
    SelectionSpec,
    StudySpec,
    build_estimator,
    example_truth,
    generate_dataset,
    run_study,
    write_reports,
)
from .smoother import (
    GCVResult,
    PenalizedSplineSmoother,
    SplineFit,
    default_lambda_grid,
    default_segment_grid,
    fit_spline,
    gcv_search,
)
from .theory import (
    BiasReport,
    TrueModel,
    asymptotic_bias,
    asymptotic_variance,
    bernoulli_polynomial,
    beta0_projection,
    g_matrices,
    local_poly_bias_constant,
    make_true_model,
)

__all__ = [
    "__version__",
    "BSplineBasis",
    "difference_penalty",
    "polynomial_coefficients",
    "DomainError",
    "RankDeficiencyError",
    "PositivityError",
    "DegenerateFitError",
    "BandwidthError",
    "SelectionError",
    "PenalizedSplineSmoother",
    "SplineFit",
    "GCVResult",
    "fit_spline",
    "gcv_search",
    "default_segment_grid",
    "default_lambda_grid",
    "ParametricFamily",
    "FittedParametricModel",
    "fit_ols",
    "aic",
    "tic",
    "model_library",
    "parse_family",
    "resolve_family",
    "SemiparametricSplineEstimator",
    "LocalPolynomialRegression",
    "SemiparametricLocalLinear",
    "default_bandwidth_grid",
    "pilot_bandwidth_grid",
    "TrueModel",
    "bernoulli_polynomial",
    "beta0_projection",
    "g_matrices",
    "BiasReport",
    "asymptotic_bias",
    "asymptotic_variance",
    "local_poly_bias_constant",
    "make_true_model",
    "SelectionReport",
    "count_criteria",
    "l_hat_a",
    "l_hat_lambda",
    "ArmSpec",
    "SelectionSpec",
    "StudySpec",
    "example_truth",
    "generate_dataset",
    "build_estimator",
    "run_study",
    "write_reports",
]
