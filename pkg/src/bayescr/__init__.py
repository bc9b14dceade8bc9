"""Bayesian cause-specific hazard models for competing-risks survival data."""

__version__ = "0.1.0"

from .data import (  # noqa: E402
    CovariateEntry,
    CovariateSchema,
    DataError,
    Dataset,
    SubjectRecord,
    parse_dataset,
    read_dataset,
    standardize,
    validate,
)
from .hazard import (  # noqa: E402
    CauseModel,
    ParameterVector,
    PiecewiseConstantBaseline,
    WeibullBaseline,
    cumulative_incidence,
    overall_survival,
    subdensity,
    transition_probability,
)
from .likelihood import log_likelihood  # noqa: E402
from .model import CauseSpec, ModelSpec  # noqa: E402
from .priors import PriorSpec, default_priors  # noqa: E402
from .sampler import PosteriorSample, SamplerConfig, gelman_rubin, run_chains  # noqa: E402

__all__ = [
    "CauseModel",
    "CauseSpec",
    "CovariateEntry",
    "CovariateSchema",
    "DataError",
    "Dataset",
    "ModelSpec",
    "ParameterVector",
    "PiecewiseConstantBaseline",
    "PosteriorSample",
    "PriorSpec",
    "SamplerConfig",
    "SubjectRecord",
    "WeibullBaseline",
    "cumulative_incidence",
    "default_priors",
    "gelman_rubin",
    "log_likelihood",
    "overall_survival",
    "parse_dataset",
    "read_dataset",
    "run_chains",
    "standardize",
    "subdensity",
    "transition_probability",
    "validate",
]
