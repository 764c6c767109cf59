"""Simulators and likelihoods for the five cognitive models."""
from __future__ import annotations

import numpy as np

from ..numcore import Rng
from .glmhmm import ContrastEnv, design_matrix, simulate_glmhmm, stationary_distribution
from .rl import (
    ArrowEnv,
    BanditEnv,
    loglik_4prl,
    loglik_metarl,
    metarl_emissions,
    replay_4prl,
    replay_metarl,
    simulate_4prl,
    simulate_hrl,
    simulate_metarl,
)
from .types import (
    INPUT_DIMS,
    MODEL_IDS,
    LatentSequence,
    ModelError,
    ModelParams,
    ModelSpec,
    TrialSequence,
    check_model_id,
    encode,
    glmhmm_param_names,
    pack_glmhmm,
    unpack_glmhmm,
)
from .weber import WeberEnv, simulate_weber

SPECS: dict[str, ModelSpec] = {
    "4prl": ModelSpec(
        "4prl",
        ("alpha_pos", "alpha_neg", "beta", "kappa"),
        ((0.0, 1.0), (0.0, 1.0), (0.0, 10.0), (0.0, 1.0)),
        ("q_chosen",),
        0,
    ),
    "metarl": ModelSpec(
        "metarl",
        ("t01", "t10", "beta", "bias", "alpha_pos", "alpha_neg0", "alpha_v", "psi", "xi"),
        ((0.0, 1.0), (0.0, 1.0), (0.0, 20.0)) + ((0.0, 1.0),) * 6,
        ("q_chosen",),
        2,
    ),
    "hrl": ModelSpec("hrl", ("alpha", "beta"), ((0.0, 1.0), (0.0, 20.0)), ("q_chosen",), 3),
    "weber": ModelSpec(
        "weber", ("mu", "lam", "beta"), ((0.0, 1.0), (0.0, 5.0), (0.0, 20.0)), ("belief_distance",), 24
    ),
    # 3 x 3 transitions + 3 x 4 weights; bounds are not boxed
    "glmhmm": ModelSpec("glmhmm", glmhmm_param_names(3), (), (), 3),
}

_SIMULATORS = {
    "4prl": simulate_4prl,
    "metarl": simulate_metarl,
    "hrl": simulate_hrl,
    "weber": simulate_weber,
    "glmhmm": simulate_glmhmm,
}


def simulate(params: ModelParams, n_trials: int, rng: Rng, env=None) -> tuple[TrialSequence, LatentSequence]:
    if n_trials < 1:
        raise ModelError("n_trials must be >= 1")
    return _SIMULATORS[params.model_id](params, n_trials, env, rng)


def loglik(params: ModelParams, seq: TrialSequence) -> float:
    if params.model_id != seq.model_id:
        raise ModelError(f"parameters for {params.model_id} applied to {seq.model_id} data")
    if seq.model_id == "4prl":
        return loglik_4prl(params, seq)
    if seq.model_id == "metarl":
        return loglik_metarl(params, seq)
    raise ModelError(f"{seq.model_id} has no tractable likelihood")


def derive_latents(model_id: str, params: ModelParams, seq: TrialSequence) -> LatentSequence:
    """Replay the agent over observed data with given parameters.

    Only the RL bandit models have latents that are a deterministic function
    of the observations; the Meta RL attentive state comes from
    ``baselines.metarl_state_posterior``.
    """
    if model_id not in ("4prl", "metarl"):
        raise ModelError(f"{model_id}: latents not a deterministic function of Y")
    if params.model_id != model_id or seq.model_id != model_id:
        raise ModelError("model id mismatch between parameters and data")
    qs = replay_4prl(params, seq) if model_id == "4prl" else replay_metarl(params, seq)
    q_chosen = qs[np.arange(seq.n_trials), seq.actions]
    return LatentSequence(q_chosen, ("q_chosen",), extras={"q": qs, "rpe": seq.rewards - q_chosen})


__all__ = [
    "ArrowEnv",
    "BanditEnv",
    "ContrastEnv",
    "INPUT_DIMS",
    "LatentSequence",
    "MODEL_IDS",
    "ModelError",
    "ModelParams",
    "ModelSpec",
    "SPECS",
    "TrialSequence",
    "WeberEnv",
    "check_model_id",
    "derive_latents",
    "design_matrix",
    "encode",
    "loglik",
    "loglik_4prl",
    "loglik_metarl",
    "metarl_emissions",
    "pack_glmhmm",
    "simulate",
    "stationary_distribution",
    "unpack_glmhmm",
]
