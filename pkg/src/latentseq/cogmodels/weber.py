"""Bayesian mapping learner with Weber-scaled inference noise.

Three stimuli map injectively onto four actions, giving 24 candidate
mappings.  The agent runs an exact Bayes filter over mappings; after every
trial a noise event with probability ``eps ~ U(0, mu + lam * d)`` moves the
tracked mapping to another one, where ``d`` is the total-variation distance
between the beliefs before and after the trial's feedback.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..numcore import Rng
from .types import LatentSequence, ModelError, ModelParams, TrialSequence

N_STIMULI = 3
N_ACTIONS = 4
# MAPPINGS[m, s] is the action mapping m assigns to stimulus s.
MAPPINGS = np.array(list(itertools.permutations(range(N_ACTIONS), N_STIMULI)), dtype=np.int64)
N_MAPPINGS = MAPPINGS.shape[0]


@dataclass(frozen=True)
class WeberEnv:
    switch_prob: float = 0.03
    lapse: float = 0.05


def uniform_gamma() -> np.ndarray:
    return np.full(N_MAPPINGS, 1.0 / N_MAPPINGS)


def action_beliefs(belief: np.ndarray, stimulus: int) -> np.ndarray:
    """Marginal belief that each action is correct for ``stimulus``.

    ``belief`` may be batched (..., 24).
    """
    onehot = np.eye(N_ACTIONS)[MAPPINGS[:, stimulus]]  # 24 x 4
    return belief @ onehot


def policy(belief: np.ndarray, stimulus: int, beta: float) -> np.ndarray:
    """Softmax over log action-beliefs, i.e. ``B_i**beta`` normalised."""
    b = action_beliefs(belief, stimulus)
    with np.errstate(divide="ignore"):
        logb = beta * np.log(b)
    logb = logb - logb.max(axis=-1, keepdims=True)
    p = np.exp(logb)
    return p / p.sum(axis=-1, keepdims=True)


def bayes_update(belief: np.ndarray, stimulus: int, action: int, reward: float, env: WeberEnv) -> np.ndarray:
    """Posterior over mappings after one trial (works on batches of beliefs)."""
    h = env.switch_prob
    prior = (1.0 - h) * belief + h * (1.0 - belief) / (N_MAPPINGS - 1)
    consistent = (MAPPINGS[:, stimulus] == action) == (reward > 0)
    lik = np.where(consistent, 1.0, env.lapse)
    post = prior * lik
    return post / post.sum(axis=-1, keepdims=True)


def tv_distance(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return 0.5 * np.abs(p - q).sum(axis=-1)


def resample_mapping(current: int, gamma: np.ndarray, rng: Rng) -> int:
    """Draw a new mapping from ``gamma`` with the current one excluded."""
    w = np.array(gamma, dtype=float)
    w[current] = 0.0
    return int(rng.categorical(w))


def lowest_argmax(x: np.ndarray) -> int:
    return int(np.argmax(x))  # numpy returns the first maximal index


def apply_noise(post: np.ndarray, new: int) -> np.ndarray:
    """Swap the mass of the current best mapping onto ``new``."""
    out = post.copy()
    best = lowest_argmax(post)
    out[best], out[new] = post[new], post[best]
    return out


def noise_probability(mu: float, lam: float, d: float, u: float) -> float:
    """Realised noise probability eps = u * (mu + lam * d), capped at 1."""
    return min(1.0, u * (mu + lam * d))


def simulate_weber(params: ModelParams, n_trials: int, env: WeberEnv | None, rng: Rng):
    if params.model_id != "weber":
        raise ModelError(f"expected weber parameters, got {params.model_id}")
    mu, lam, beta = params.theta
    env = env or WeberEnv()
    gamma = uniform_gamma()
    belief = np.full(N_MAPPINGS, 1.0 / N_MAPPINGS)
    tracked = 0
    true_map = int(rng.integers(0, N_MAPPINGS))
    stimuli = rng.integers(0, N_STIMULI, size=n_trials)
    u = rng.uniform(size=(n_trials, 5)).tolist()
    actions = np.empty(n_trials, dtype=np.int64)
    rewards = np.empty(n_trials)
    tracked_seq = np.empty(n_trials, dtype=np.int64)
    dist = np.empty(n_trials)
    eps_seq = np.empty(n_trials)
    true_seq = np.empty(n_trials, dtype=np.int64)
    for t in range(n_trials):
        u_env, u_new, u_act, u_eps, u_noise = u[t]
        if t > 0 and u_env < env.switch_prob:
            others = [m for m in range(N_MAPPINGS) if m != true_map]
            true_map = others[min(int(u_new * len(others)), len(others) - 1)]
        s = int(stimuli[t])
        p = policy(belief, s, beta)
        a = min(int(np.searchsorted(np.cumsum(p), u_act, side="right")), N_ACTIONS - 1)
        r = 1.0 if MAPPINGS[true_map, s] == a else 0.0
        tracked_seq[t], true_seq[t] = tracked, true_map
        post = bayes_update(belief, s, a, r, env)
        d = float(tv_distance(belief, post))
        eps = noise_probability(mu, lam, d, u_eps)
        if u_noise < eps:
            tracked = resample_mapping(lowest_argmax(post), gamma, rng)
            post = apply_noise(post, tracked)
        else:
            tracked = lowest_argmax(post)
        belief = post
        actions[t], rewards[t], dist[t], eps_seq[t] = a, r, d, eps
    stim = np.eye(N_STIMULI)[stimuli]
    seq = TrialSequence("weber", actions, rewards, stim)
    lat = LatentSequence(
        dist,
        ("belief_distance",),
        discrete=tracked_seq,
        n_classes=N_MAPPINGS,
        extras={"eps": eps_seq, "true_mapping": true_seq},
    )
    return seq, lat
