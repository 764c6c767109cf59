"""Bootstrap particle filters with known parameters for the HRL and Weber models."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cogmodels import ModelParams, TrialSequence
from ..cogmodels.rl import Q_INIT
from ..cogmodels.weber import MAPPINGS, N_MAPPINGS, WeberEnv, bayes_update, policy, tv_distance
from ..numcore import Rng


class FilterError(RuntimeError):
    pass


@dataclass
class ParticleEnsemble:
    states: dict
    weights: np.ndarray

    @property
    def ess(self) -> float:
        return float(1.0 / np.sum(self.weights**2))

    @property
    def n(self) -> int:
        return self.weights.size


@dataclass
class FilterOutput:
    """Per-trial filtering estimates."""

    class_probs: np.ndarray  # T x n_classes
    expected_continuous: np.ndarray  # T
    ess: np.ndarray  # T, after reweighting and before any resampling
    resampled: np.ndarray  # T bools
    final: ParticleEnsemble
    log_evidence: float = 0.0  # estimate of log P(actions | params)

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.class_probs, axis=1)


def systematic_resample(weights: np.ndarray, rng: Rng) -> np.ndarray:
    """Ancestor indices by systematic resampling."""
    n = weights.size
    positions = (rng.uniform() + np.arange(n)) / n
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, positions, side="right").clip(0, n - 1)


def _reweight(w: np.ndarray, lik: np.ndarray, t: int) -> tuple[np.ndarray, float]:
    """Normalised weights and the incremental evidence sum_i w_i lik_i."""
    w = w * lik
    s = w.sum()
    if not s > 0:
        raise FilterError(f"all particle weights are zero at trial {t}: observation impossible under the model")
    return w / s, float(s)


def _check(n_particles: int, ess_threshold: float) -> None:
    if n_particles < 1:
        raise ValueError("n_particles must be >= 1")
    if not 0 <= ess_threshold <= 1:
        raise ValueError("ess_threshold must lie in [0, 1]")


def particle_filter_hrl(
    params: ModelParams,
    seq: TrialSequence,
    n_particles: int = 1000,
    ess_threshold: float = 0.5,
    seed: int = 0,
) -> FilterOutput:
    """Filter the attended arrow and its value.

    Particles carry the agent's per-arrow Q vector.  Each trial a particle is
    reweighted by the policy probability of the observed side (the softmax
    mass on arrows pointing that way) and then draws its arrow from those
    consistent arrows in proportion to the softmax.  Drawing from the plain
    policy instead gives the same posterior but can leave every particle on a
    contradicted arrow when beta is large.
    """
    _check(n_particles, ess_threshold)
    alpha, beta = params.theta
    rng = Rng(seed)
    dirs = seq.stimuli
    T, n_arrows = dirs.shape
    side = np.where(seq.actions > 0, 1.0, -1.0)
    N = n_particles
    q = np.full((N, n_arrows), Q_INIT)
    w = np.full(N, 1.0 / N)
    rows = np.arange(N)
    probs = np.empty((T, n_arrows))
    q_exp = np.empty(T)
    ess = np.empty(T)
    resampled = np.zeros(T, dtype=bool)
    log_ev = 0.0
    for t in range(T):
        logits = beta * q
        p = np.exp(logits - logits.max(axis=1, keepdims=True))
        p = p / p.sum(axis=1, keepdims=True) * (dirs[t] == side[t])
        cdf = np.cumsum(p, axis=1)
        lik = cdf[:, -1]
        w, inc = _reweight(w, lik, t)
        log_ev += np.log(inc)
        u = rng.uniform(size=N) * lik
        k = (u[:, None] >= cdf[:, :-1]).sum(axis=1)
        qk = q[rows, k]
        probs[t] = np.bincount(k, weights=w, minlength=n_arrows)
        q_exp[t] = w @ qk
        q[rows, k] = qk + alpha * (seq.rewards[t] - qk)
        ess[t] = 1.0 / np.sum(w * w)
        if ess[t] < ess_threshold * N:
            idx = systematic_resample(w, rng)
            q = q[idx]
            w = np.full(N, 1.0 / N)
            resampled[t] = True
    return FilterOutput(probs, q_exp, ess, resampled, ParticleEnsemble({"q": q}, w), float(log_ev))


def particle_filter_weber(
    params: ModelParams,
    seq: TrialSequence,
    n_particles: int = 1000,
    ess_threshold: float = 0.5,
    seed: int = 0,
    env: WeberEnv | None = None,
) -> FilterOutput:
    """Filter the tracked mapping and the belief-update distance ``d_t``.

    Particles carry (tracked mapping, belief vector) and follow the agent's
    dynamics: Bayes update on the observed feedback, then a noise event that
    swaps the best mapping's mass onto a freshly drawn one.  Weights are the
    policy probability of the observed action.
    """
    _check(n_particles, ess_threshold)
    mu, lam, beta = params.theta
    env = env or WeberEnv()
    rng = Rng(seed)
    T = seq.n_trials
    stim = np.argmax(seq.stimuli, axis=1)
    N = n_particles
    belief = np.full((N, N_MAPPINGS), 1.0 / N_MAPPINGS)
    tracked = np.zeros(N, dtype=np.int64)
    w = np.full(N, 1.0 / N)
    rows = np.arange(N)
    probs = np.empty((T, N_MAPPINGS))
    d_exp = np.empty(T)
    ess = np.empty(T)
    resampled = np.zeros(T, dtype=bool)
    log_ev = 0.0
    for t in range(T):
        s, a, r = int(stim[t]), int(seq.actions[t]), float(seq.rewards[t])
        w, inc = _reweight(w, policy(belief, s, beta)[:, a], t)
        log_ev += np.log(inc)
        post = bayes_update(belief, s, a, r, env)
        d = tv_distance(belief, post)
        probs[t] = np.bincount(tracked, weights=w, minlength=N_MAPPINGS)
        d_exp[t] = w @ d
        # noise events: eps = U(0,1) * (mu + lam * d), capped at 1
        eps = np.minimum(1.0, rng.uniform(size=N) * (mu + lam * d))
        noisy = rng.uniform(size=N) < eps
        best = np.argmax(post, axis=1)
        tracked = best.copy()
        if noisy.any():
            ni = rows[noisy]
            # new mapping uniform over the other 23
            new = rng.integers(0, N_MAPPINGS - 1, size=ni.size)
            new = new + (new >= best[ni])
            pb, pn = post[ni, best[ni]].copy(), post[ni, new].copy()
            post[ni, best[ni]], post[ni, new] = pn, pb
            tracked[ni] = new
        belief = post
        ess[t] = 1.0 / np.sum(w * w)
        if ess[t] < ess_threshold * N:
            idx = systematic_resample(w, rng)
            belief, tracked = belief[idx], tracked[idx]
            w = np.full(N, 1.0 / N)
            resampled[t] = True
    return FilterOutput(probs, d_exp, ess, resampled, ParticleEnsemble({"belief": belief, "tracked": tracked}, w), float(log_ev))


__all__ = [
    "FilterError",
    "FilterOutput",
    "MAPPINGS",
    "ParticleEnsemble",
    "particle_filter_hrl",
    "particle_filter_weber",
    "systematic_resample",
]
