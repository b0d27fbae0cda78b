"""Extreme-value Birnbaum-Saunders regression and local influence diagnostics."""

from .kernels import OptimOptions, OptimResult, RngState, maximize, solve_spd, sym_eigen
from .distributions import (
    EvbsParams,
    GevParams,
    LogEvbsParams,
    ShapeReport,
    classify_pdf_shape,
    evbs_cdf,
    evbs_pdf,
    evbs_sample,
    gev_cdf,
    gev_sample,
    logevbs_cdf,
    logevbs_pdf,
    logevbs_sample,
    logevbs_support,
    moment_exists,
)
from .regression import (
    FitResult,
    RegressionData,
    ThetaParams,
    default_init,
    fit_mle,
    hessian,
    loglik,
    predict_response,
    score,
    xi_terms,
)

__version__ = "0.1.0"
