"""Generalized diversity subsampling (g-DS).

Sequential weighted subsampling toward a target density, the pointwise
error expansion of the resulting subsample density, and a Monte Carlo
harness that checks the predicted convergence rates.
"""
from .densities import DensitySpec, check_regularity, expect_ratio_moment, pdf_eval, sample_iid
from .errors import (
    AllZeroWeights,
    ConfigError,
    DegenerateData,
    DomainError,
    GDSError,
    InsufficientMass,
    InsufficientSignal,
    NonFinite,
    SpecBoundsViolated,
    SupportError,
    ZeroDenominator,
)
from .estimator import (
    CatalogFunction,
    EstimateRealization,
    GaussianKDE,
    PerturbationSpec,
    kde_eval,
    kde_fit,
    synth_estimate,
    weights,
)
from .expansion import (
    A1,
    A2,
    ExpansionBreakdown,
    ExpansionInputs,
    calI,
    mu_moment,
    rate_exponent,
    sigma00_sq,
    theorem_ratio,
)
from .normal_moments import (
    AlphaTable,
    SRNParams,
    alpha_coeff,
    alpha_table_recursive,
    dawson,
    gaussian_moment,
    srn_cross_moment,
    srn_moment,
    srn_moment_series,
)
from .quadrature import QuadratureRule
from .sampler import Subsample, WeightedPool, chain_prob_exact, gds_select, naive_select, sweep_select

__version__ = "0.1.0"

__all__ = [
    "A1",
    "A2",
    "AllZeroWeights",
    "AlphaTable",
    "CatalogFunction",
    "ConfigError",
    "DegenerateData",
    "DensitySpec",
    "DomainError",
    "EstimateRealization",
    "ExpansionBreakdown",
    "ExpansionInputs",
    "GDSError",
    "GaussianKDE",
    "InsufficientMass",
    "InsufficientSignal",
    "NonFinite",
    "PerturbationSpec",
    "QuadratureRule",
    "SRNParams",
    "SpecBoundsViolated",
    "Subsample",
    "SupportError",
    "WeightedPool",
    "ZeroDenominator",
    "alpha_coeff",
    "alpha_table_recursive",
    "calI",
    "chain_prob_exact",
    "check_regularity",
    "dawson",
    "expect_ratio_moment",
    "gaussian_moment",
    "gds_select",
    "kde_eval",
    "kde_fit",
    "mu_moment",
    "naive_select",
    "pdf_eval",
    "rate_exponent",
    "sample_iid",
    "sigma00_sq",
    "srn_cross_moment",
    "srn_moment",
    "srn_moment_series",
    "sweep_select",
    "synth_estimate",
    "theorem_ratio",
    "weights",
]
