"""Cox regression for left-truncated, right-censored data with a known truncation law."""
from .data import Dataset, Schema, SubjectRecord, distinct_failure_times, load_csv, write_csv
from .estimators import (
    FitResult,
    fit_ppl,
    fit_reference_pl,
    fit_wee,
    ppl_loglik_hessian,
    ppl_score,
    sample_adjusted_risk_sets,
    wee_score,
)
from .inference import ase_report, breslow_baseline, gamma_hat, martingale_residuals, sandwich_covariance
from .truncation import Exponential, Uniform, Weibull
from .weights import CensoringWeights, km_residual_censoring, nelson_aalen_residual_censoring

__version__ = "0.1.0"
