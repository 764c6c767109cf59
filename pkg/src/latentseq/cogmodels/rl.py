"""Reinforcement-learning agents: 4-parameter RL, meta RL with dynamic noise,
and hierarchical (arrow-rule) RL."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..numcore import Rng, softmax
from .types import LatentSequence, ModelError, ModelParams, TrialSequence

Q_INIT = 0.5


@dataclass(frozen=True)
class BanditEnv:
    """Two-armed bandit with probabilistic reversals."""

    p_high: float = 0.8
    p_low: float = 0.2
    switch_prob: float = 0.02
    min_block: int = 10


@dataclass(frozen=True)
class ArrowEnv:
    """Three arrows pointing left/right; one (hidden) arrow is correct."""

    n_arrows: int = 3
    switch_prob: float = 0.04


def _require(params: ModelParams, model_id: str) -> np.ndarray:
    if params.model_id != model_id:
        raise ModelError(f"expected {model_id} parameters, got {params.model_id}")
    return params.theta


# ---------------------------------------------------------------- 4-P RL


def update_4prl(q, a, r, alpha_pos, alpha_neg):
    """In-place delta-rule update with counterfactual learning on the other arm."""
    alpha = alpha_pos if r > 0 else alpha_neg
    q[a] = q[a] + alpha * (r - q[a])
    b = 1 - a
    q[b] = q[b] + alpha * ((1.0 - r) - q[b])


def _p_right_4prl(q, prev, beta, kappa):
    v0 = beta * q[0] + (kappa if prev == 0 else 0.0)
    v1 = beta * q[1] + (kappa if prev == 1 else 0.0)
    d = v1 - v0
    return 1.0 / (1.0 + math.exp(-d)) if d >= 0 else math.exp(d) / (1.0 + math.exp(d))


def simulate_4prl(params: ModelParams, n_trials: int, env: BanditEnv | None, rng: Rng):
    alpha_pos, alpha_neg, beta, kappa = _require(params, "4prl")
    env = env or BanditEnv()
    u = rng.uniform(size=(n_trials, 3)).tolist()
    q = [Q_INIT, Q_INIT]
    good, block, prev = int(rng.integers(0, 2)), 0, -1
    actions = np.empty(n_trials, dtype=np.int64)
    rewards = np.empty(n_trials)
    qs = np.empty((n_trials, 2))
    for t in range(n_trials):
        ua, ur, us = u[t]
        qs[t] = q
        a = 1 if ua < _p_right_4prl(q, prev, beta, kappa) else 0
        r = 1.0 if ur < (env.p_high if a == good else env.p_low) else 0.0
        update_4prl(q, a, r, alpha_pos, alpha_neg)
        actions[t], rewards[t], prev = a, r, a
        block += 1
        if block >= env.min_block and us < env.switch_prob:
            good, block = 1 - good, 0
    seq = TrialSequence("4prl", actions, rewards, np.zeros((n_trials, 0)))
    q_chosen = qs[np.arange(n_trials), actions]
    lat = LatentSequence(q_chosen, ("q_chosen",), extras={"q": qs, "rpe": rewards - q_chosen})
    return seq, lat


def replay_4prl(params: ModelParams, seq: TrialSequence) -> np.ndarray:
    """Pre-update Q-values (T x 2) obtained by running the agent over ``seq``."""
    alpha_pos, alpha_neg, _, _ = _require(params, "4prl")
    q = [Q_INIT, Q_INIT]
    qs = np.empty((seq.n_trials, 2))
    for t, (a, r) in enumerate(zip(seq.actions.tolist(), seq.rewards.tolist())):
        qs[t] = q
        update_4prl(q, a, r, alpha_pos, alpha_neg)
    return qs


@njit(cache=True)
def _loglik_4prl(actions, rewards, alpha_pos, alpha_neg, beta, kappa):
    q0 = 0.5
    q1 = 0.5
    prev = -1
    ll = 0.0
    for t in range(actions.shape[0]):
        a = actions[t]
        r = rewards[t]
        v0 = beta * q0
        v1 = beta * q1
        if prev == 0:
            v0 += kappa
        elif prev == 1:
            v1 += kappa
        d = v1 - v0 if a == 1 else v0 - v1
        # log sigmoid(d)
        if d >= 0:
            ll -= math.log1p(math.exp(-d))
        else:
            ll += d - math.log1p(math.exp(d))
        alpha = alpha_pos if r > 0 else alpha_neg
        if a == 0:
            q0 = q0 + alpha * (r - q0)
            q1 = q1 + alpha * ((1.0 - r) - q1)
        else:
            q1 = q1 + alpha * (r - q1)
            q0 = q0 + alpha * ((1.0 - r) - q0)
        prev = a
    return ll


def loglik_4prl(params: ModelParams, seq: TrialSequence) -> float:
    """Exact log P(actions | rewards, theta)."""
    if seq.model_id != "4prl":
        raise ModelError(f"4-P RL likelihood called on {seq.model_id} data")
    return float(_loglik_4prl(seq.actions, seq.rewards, *_require(params, "4prl")))


def loglik_4prl_arrays(theta, actions, rewards) -> float:
    """Unchecked fast path used by the optimizers."""
    return _loglik_4prl(actions, rewards, theta[0], theta[1], theta[2], theta[3])


# ---------------------------------------------------------------- Meta RL

METARL_RANDOM, METARL_ENGAGED = 0, 1


def metarl_initial_engaged(t01: float, t10: float) -> float:
    """Stationary engaged probability; an absorbing pair starts engaged."""
    s = t01 + t10
    return 1.0 if s == 0 else t01 / s


class MetaRLAgent:
    """Value learner with uncertainty-scaled updates and forgetting.

    The attentive state does not enter here: Q, E and the dynamic negative
    learning rate evolve identically in both states.
    """

    def __init__(self, alpha_pos, alpha_neg0, alpha_v, psi, xi):
        self.alpha_pos, self.alpha_neg0 = alpha_pos, alpha_neg0
        self.alpha_v, self.psi, self.xi = alpha_v, psi, xi
        self.q = [Q_INIT, Q_INIT]
        self.e = 0.0
        self.alpha_neg = alpha_neg0

    def update(self, a: int, r: float) -> float:
        q = self.q
        delta = r - q[a]
        v = abs(delta) - self.e
        if r > 0:
            lr = self.alpha_pos
        else:
            an = self.psi * (v + self.alpha_neg0) + (1.0 - self.psi) * self.alpha_neg
            self.alpha_neg = min(1.0, max(0.0, an))
            lr = self.alpha_neg
        q[a] = q[a] + lr * delta * (1.0 - self.e)
        q[1 - a] = self.xi * q[1 - a]
        self.e = self.e + self.alpha_v * v
        return delta


def metarl_p_left(q, beta, bias) -> float:
    x = beta * (q[1] - q[0]) + bias
    return 1.0 / (1.0 + math.exp(x)) if x >= 0 else math.exp(-x) / (1.0 + math.exp(-x))


def simulate_metarl(params: ModelParams, n_trials: int, env: BanditEnv | None, rng: Rng):
    t01, t10, beta, bias, alpha_pos, alpha_neg0, alpha_v, psi, xi = _require(params, "metarl")
    env = env or BanditEnv()
    u = rng.uniform(size=(n_trials, 4)).tolist()
    agent = MetaRLAgent(alpha_pos, alpha_neg0, alpha_v, psi, xi)
    state = METARL_ENGAGED if rng.uniform() < metarl_initial_engaged(t01, t10) else METARL_RANDOM
    good, block = int(rng.integers(0, 2)), 0
    actions = np.empty(n_trials, dtype=np.int64)
    rewards = np.empty(n_trials)
    states = np.empty(n_trials, dtype=np.int64)
    qs = np.empty((n_trials, 2))
    for t in range(n_trials):
        ua, ur, us, uz = u[t]
        qs[t] = agent.q
        states[t] = state
        p_left = metarl_p_left(agent.q, beta, bias) if state == METARL_ENGAGED else 0.5
        a = 0 if ua < p_left else 1
        r = 1.0 if ur < (env.p_high if a == good else env.p_low) else 0.0
        agent.update(a, r)
        actions[t], rewards[t] = a, r
        block += 1
        if block >= env.min_block and us < env.switch_prob:
            good, block = 1 - good, 0
        if state == METARL_ENGAGED:
            state = METARL_RANDOM if uz < t10 else METARL_ENGAGED
        else:
            state = METARL_ENGAGED if uz < t01 else METARL_RANDOM
    seq = TrialSequence("metarl", actions, rewards, np.zeros((n_trials, 0)))
    q_chosen = qs[np.arange(n_trials), actions]
    lat = LatentSequence(
        q_chosen, ("q_chosen",), discrete=states, n_classes=2, extras={"q": qs, "rpe": rewards - q_chosen}
    )
    return seq, lat


def replay_metarl(params: ModelParams, seq: TrialSequence) -> np.ndarray:
    _, _, _, _, alpha_pos, alpha_neg0, alpha_v, psi, xi = _require(params, "metarl")
    agent = MetaRLAgent(alpha_pos, alpha_neg0, alpha_v, psi, xi)
    qs = np.empty((seq.n_trials, 2))
    for t, (a, r) in enumerate(zip(seq.actions.tolist(), seq.rewards.tolist())):
        qs[t] = agent.q
        agent.update(a, r)
    return qs


@njit(cache=True)
def _metarl_engaged_action_probs(actions, rewards, beta, bias, alpha_pos, alpha_neg0, alpha_v, psi, xi):
    """P(a_t | engaged) for every trial of an observed sequence."""
    n = actions.shape[0]
    out = np.empty(n)
    q = np.array([0.5, 0.5])
    e = 0.0
    alpha_neg = alpha_neg0
    for t in range(n):
        a = actions[t]
        r = rewards[t]
        x = beta * (q[1] - q[0]) + bias
        if x >= 0:
            p_left = 1.0 / (1.0 + math.exp(x))
        else:
            p_left = math.exp(-x) / (1.0 + math.exp(-x))
        out[t] = p_left if a == 0 else 1.0 - p_left
        delta = r - q[a]
        v = abs(delta) - e
        if r > 0:
            lr = alpha_pos
        else:
            an = psi * (v + alpha_neg0) + (1.0 - psi) * alpha_neg
            alpha_neg = min(1.0, max(0.0, an))
            lr = alpha_neg
        q[a] = q[a] + lr * delta * (1.0 - e)
        q[1 - a] = xi * q[1 - a]
        e = e + alpha_v * v
    return out


@njit(cache=True)
def _metarl_forward_loglik(p_engaged_emit, t01, t10):
    s = t01 + t10
    pe = 1.0 if s == 0 else t01 / s
    pr = 1.0 - pe
    ll = 0.0
    for t in range(p_engaged_emit.shape[0]):
        if t > 0:
            pe, pr = pe * (1.0 - t10) + pr * t01, pe * t10 + pr * (1.0 - t01)
        pe = pe * p_engaged_emit[t]
        pr = pr * 0.5
        c = pe + pr
        if c <= 0.0:
            return -np.inf
        ll += math.log(c)
        pe /= c
        pr /= c
    return ll


def metarl_emissions(params: ModelParams, seq: TrialSequence) -> np.ndarray:
    """Per-trial emission probabilities, columns (random, engaged)."""
    theta = _require(params, "metarl")
    p_eng = _metarl_engaged_action_probs(seq.actions, seq.rewards, *theta[2:])
    return np.column_stack([np.full(seq.n_trials, 0.5), p_eng])


def loglik_metarl(params: ModelParams, seq: TrialSequence) -> float:
    if seq.model_id != "metarl":
        raise ModelError(f"meta RL likelihood called on {seq.model_id} data")
    return loglik_metarl_arrays(_require(params, "metarl"), seq.actions, seq.rewards)


def loglik_metarl_arrays(theta, actions, rewards) -> float:
    p_eng = _metarl_engaged_action_probs(actions, rewards, *theta[2:])
    return float(_metarl_forward_loglik(p_eng, theta[0], theta[1]))


# ---------------------------------------------------------------- HRL


def simulate_hrl(params: ModelParams, n_trials: int, env: ArrowEnv | None, rng: Rng):
    alpha, beta = _require(params, "hrl")
    env = env or ArrowEnv()
    n = env.n_arrows
    directions = np.where(rng.uniform(size=(n_trials, n)) < 0.5, -1.0, 1.0)
    u = rng.uniform(size=(n_trials, 3)).tolist()
    q = np.full(n, Q_INIT)
    correct = int(rng.integers(0, n))
    actions = np.empty(n_trials, dtype=np.int64)
    rewards = np.empty(n_trials)
    arrows = np.empty(n_trials, dtype=np.int64)
    q_chosen = np.empty(n_trials)
    corrects = np.empty(n_trials, dtype=np.int64)
    for t in range(n_trials):
        ua, us, uc = u[t]
        p = softmax(q, beta)
        k = min(int(np.searchsorted(np.cumsum(p), ua, side="right")), n - 1)
        side = directions[t, k]
        a = 1 if side > 0 else 0
        r = 1.0 if side == directions[t, correct] else 0.0
        arrows[t], q_chosen[t], corrects[t] = k, q[k], correct
        q[k] = q[k] + alpha * (r - q[k])
        actions[t], rewards[t] = a, r
        if us < env.switch_prob:
            others = [c for c in range(n) if c != correct]
            correct = others[min(int(uc * len(others)), len(others) - 1)]
    seq = TrialSequence("hrl", actions, rewards, directions)
    lat = LatentSequence(q_chosen, ("q_chosen",), discrete=arrows, n_classes=n, extras={"correct": corrects})
    return seq, lat
