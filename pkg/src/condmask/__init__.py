"""Conditional masking of a sensitive numeric column and recovery of its
moments, distribution function, quantiles and correlations."""

__version__ = "0.1.0"

from .dist import (  # noqa: E402
    CopulaSpec,
    LaplaceSpec,
    NormalSpec,
    gaussian_convolution_oracle,
    normal_cdf,
    normal_raw_moment,
    sample_copula_pair,
    silverman_bandwidth,
)
from .estimators import (  # noqa: E402
    CdfEstimate,
    MomentReport,
    QuantileQuery,
    SeriesTruncation,
    cdf_estimate_t1,
    cdf_estimate_tb,
    cdf_t1,
    cdf_tb,
    estimate_correlation,
    estimate_raw_moments,
    estimate_variance,
    quantile,
    quantiles,
)
from .mask import (  # noqa: E402
    AnmParams,
    MaskedColumn,
    MaskParams,
    ReleaseParams,
    mask_additive_laplace,
    mask_conditional,
    release_report,
)
from .risk import RiskConfig, disclosure_risk, mse_mean_estimator, mse_record_estimator  # noqa: E402
