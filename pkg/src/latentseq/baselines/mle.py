"""Bounded maximum-likelihood and MAP fits with multi-start Nelder-Mead."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from ..cogmodels import SPECS, ModelParams, TrialSequence
from ..cogmodels.rl import loglik_4prl_arrays, loglik_metarl_arrays
from ..cogmodels.types import ModelError
from ..numcore import Rng
from ..priors import PriorSpec

_LOGLIK = {"4prl": loglik_4prl_arrays, "metarl": loglik_metarl_arrays}


class FitError(RuntimeError):
    pass


@dataclass
class FitResult:
    params: ModelParams
    objective: float  # minimised negative log-likelihood (or log-posterior)
    n_restarts: int
    converged: bool


def negative_loglik(model_id: str, theta, seq: TrialSequence) -> float:
    ll = _LOGLIK[model_id](np.asarray(theta, dtype=float), seq.actions, seq.rewards)
    return -ll if np.isfinite(ll) else np.inf


def _fit(model_id, seq, bounds, n_restarts, seed, extra_objective=None) -> FitResult:
    if model_id not in _LOGLIK:
        raise ModelError(f"{model_id} has no tractable likelihood to maximise")
    if seq.model_id != model_id:
        raise ModelError(f"{model_id} fit applied to {seq.model_id} data")
    if n_restarts < 1:
        raise ValueError("n_restarts must be >= 1")
    bounds = tuple(bounds) if bounds is not None else SPECS[model_id].bounds
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    actions, rewards = seq.actions, seq.rewards
    loglik = _LOGLIK[model_id]

    def objective(theta):
        theta = np.clip(theta, lo, hi)
        ll = loglik(theta, actions, rewards)
        if extra_objective is not None:
            ll += extra_objective(theta)
        return -ll if np.isfinite(ll) else 1e300

    rng = Rng(seed)
    best = None
    for i in range(n_restarts):
        x0 = rng.substream(i).uniform(lo, hi)
        try:
            res = minimize(
                objective,
                x0,
                method="Nelder-Mead",
                bounds=list(zip(lo, hi)),
                options={"xatol": 1e-5, "fatol": 1e-7, "maxiter": 400 * len(lo), "adaptive": len(lo) > 4},
            )
        except (FloatingPointError, ValueError):
            continue
        if res.fun >= 1e300 or not np.isfinite(res.fun):
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise FitError(f"all {n_restarts} restarts failed to evaluate the objective")
    theta = np.clip(best.x, lo, hi)
    return FitResult(ModelParams(model_id, theta), float(objective(theta)), n_restarts, bool(best.success))


def fit_mle(model_id: str, seq: TrialSequence, bounds=None, n_restarts: int = 10, seed: int = 0) -> FitResult:
    """Best of ``n_restarts`` bounded Nelder-Mead searches on -log P(Y | theta)."""
    return _fit(model_id, seq, bounds, n_restarts, seed)


def fit_map(
    model_id: str, seq: TrialSequence, prior: PriorSpec, bounds=None, n_restarts: int = 10, seed: int = 0
) -> FitResult:
    """As :func:`fit_mle` with the log prior density added to the objective."""
    names = SPECS[model_id].param_names
    box = tuple(bounds) if bounds is not None else SPECS[model_id].bounds
    probe = Rng(seed).substream(999_983)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    if not any(np.isfinite(prior.log_density(names, probe.uniform(lo, hi))) for _ in range(1000)):
        raise FitError("prior density is zero over the whole search box")
    return _fit(model_id, seq, box, n_restarts, seed, lambda th: prior.log_density(names, th))
