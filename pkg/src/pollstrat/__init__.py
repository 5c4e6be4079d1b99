"""Debiasing non-representative social-media election polls by regression on
proxy-voter stratum marginals and poststratification to a reference population."""

from .core import (
    INTERCEPT,
    POSTSTRAT_DIMENSIONS,
    REGRESSION_DIMENSIONS,
    Dimension,
    DimensionRegistry,
    Election,
    FittedModel,
    PollRecord,
    ReferenceDistribution,
    StratumMarginals,
    default_registry,
    validate_registry,
)
from .normalize import NormalizedOutcome, normalize_poll, position_share_pairs
from .pipeline import prepare
from .poststrat import (
    EstimateReport,
    assemble_design,
    error_metrics,
    estimate,
    fit,
    poststratify,
    poststratify_conditional,
    threshold_sweep,
)
from .stats import (
    BootstrapSummary,
    DesignMatrix,
    bootstrap,
    cohens_kappa,
    fleiss_kappa,
    ols,
    ols_fit,
    pearson,
)

__version__ = "0.1.0"
