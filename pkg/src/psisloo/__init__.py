"""Out-of-sample predictive accuracy of Bayesian models from log-likelihood draws.

Given an ``S x n`` matrix of ``log p(y_i | theta^s)`` over posterior draws,
the package estimates the expected log pointwise predictive density with
Pareto smoothed importance sampling leave-one-out (PSIS-LOO), raw or
truncated importance sampling, WAIC and K-fold cross-validation, together
with standard errors, Pareto ``k`` diagnostics and paired model comparison.
"""

from .errors import (
    CoverageError,
    DegenerateSampleSize,
    EmptyInput,
    EmptyMatrix,
    EstimationError,
    InputError,
    InsufficientTail,
    InvalidK,
    InvalidProbability,
    InvalidReplicates,
    LengthMismatch,
    LooError,
    NoMatchingColumns,
    NonFinite,
    NonPositiveExceedance,
    NonRectangular,
    OutOfSupport,
    ParseError,
)
from .estimators import (
    ComparisonResult,
    ElpdResult,
    bayesian_bootstrap_se,
    compare,
    elpd_loo,
    elpd_loo_from_blocks,
    se_of,
    waic,
    waic_from_blocks,
)
from .gpd import GeneralizedPareto, TailFit, fit_gpd, gpd_cdf, gpd_quantile
from .kfold import (
    FoldAssignment,
    FoldLogLik,
    burman_correction,
    burman_from_folds,
    elpd_kfold,
    make_folds,
    make_repeated_folds,
    summarize_repetitions,
)
from .loglik import LogLikMatrix, PointwiseValues, log_mean_exp, lpd, validate_matrix
from .psis import (
    DiagnosticFlag,
    SmoothedWeights,
    diagnose,
    psis_smooth,
    psis_smooth_matrix,
    raw_log_ratios,
    truncate_weights,
)

__version__ = "0.1.0"
