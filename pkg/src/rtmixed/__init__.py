"""Hierarchical Bayesian mixed models for individual differences in
response-time effects, with Bayes-factor comparison of four structures
(unconstrained, positive effects, common effect, null) on raw or
shift-log-transformed response times."""

from .dataio import (
    DesignSummary,
    TrialSchema,
    TrialTable,
    apply_shift_log,
    load_trials,
    observed_effects,
    validate_design,
)
from .errors import (
    DesignError,
    DomainError,
    NumericError,
    RowError,
    RtMixedError,
    SchemaError,
    TransformError,
    UnstableEstimateError,
)
from .evidence import (
    BfReport,
    EvidenceConfig,
    LogMarginal,
    compare_models,
    encompassing_bf,
    log_marginal,
    log_marginal_given_g,
)
from .gibbs import McmcConfig, PosteriorDraws, diagnose, gibbs_fit, sample_truncated_normal
from .model import (
    DesignMatrix,
    ModelKind,
    PriorConfig,
    build_design,
    prior_density_g,
    sample_g,
)
from .simulate import SimSpec, generate, grid_oracle_logml, recovery_study
from .summary import (
    BackTransform,
    EffectSummary,
    back_transform,
    posterior_model_prob,
    summarize_effects,
)

__version__ = "0.1.0"
