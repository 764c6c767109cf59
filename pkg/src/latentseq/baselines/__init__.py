"""Likelihood-based estimators the network is compared against."""
from .hmm import (
    EMError,
    EMResult,
    HmmPosterior,
    align_states_to_prototypes,
    fit_glmhmm_em,
    forward_backward,
    glm_log_emissions,
    metarl_state_posterior,
)
from .mle import FitError, FitResult, fit_map, fit_mle, negative_loglik
from .particle import (
    FilterError,
    FilterOutput,
    ParticleEnsemble,
    particle_filter_hrl,
    particle_filter_weber,
    systematic_resample,
)

__all__ = [
    "EMError",
    "EMResult",
    "FilterError",
    "FilterOutput",
    "FitError",
    "FitResult",
    "HmmPosterior",
    "ParticleEnsemble",
    "align_states_to_prototypes",
    "fit_glmhmm_em",
    "fit_map",
    "fit_mle",
    "forward_backward",
    "glm_log_emissions",
    "metarl_state_posterior",
    "negative_loglik",
    "particle_filter_hrl",
    "particle_filter_weber",
    "systematic_resample",
]
