"""Input-output HMM with per-state Bernoulli GLM choice policies."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numcore import Rng, sigmoid
from .types import LatentSequence, ModelError, ModelParams, TrialSequence, unpack_glmhmm

CONTRASTS = (0.0, 0.0625, -0.0625, 0.125, -0.125, 0.25, -0.25, 0.5, -0.5, 1.0, -1.0)
N_REGRESSORS = 4


@dataclass(frozen=True)
class ContrastEnv:
    contrasts: tuple[float, ...] = CONTRASTS
    zscore: bool = True


def design_matrix(seq: TrialSequence) -> np.ndarray:
    """Regressors [stimulus, 1, previous choice, win-stay/lose-switch] per trial.

    Choices are coded -1 (left) / +1 (right).  The first trial has no history,
    so its history regressors are 0.
    """
    return design_from_arrays(seq.actions, seq.rewards, seq.stimuli[:, 0])


def design_from_arrays(actions, rewards, stimulus) -> np.ndarray:
    T = len(actions)
    c = 2.0 * np.asarray(actions, dtype=float) - 1.0
    X = np.zeros((T, N_REGRESSORS))
    X[:, 0] = stimulus
    X[:, 1] = 1.0
    if T > 1:
        X[1:, 2] = c[:-1]
        X[1:, 3] = np.where(np.asarray(rewards[:-1]) > 0, c[:-1], -c[:-1])
    return X


def stationary_distribution(A: np.ndarray) -> np.ndarray:
    """Left eigenvector of A for eigenvalue 1 (normalised)."""
    w, v = np.linalg.eig(A.T)
    i = int(np.argmin(np.abs(w - 1.0)))
    pi = np.real(v[:, i])
    return pi / pi.sum()


def simulate_glmhmm(params: ModelParams, n_trials: int, env: ContrastEnv | None, rng: Rng):
    if params.model_id != "glmhmm":
        raise ModelError(f"expected glmhmm parameters, got {params.model_id}")
    A, W = unpack_glmhmm(params.theta)
    env = env or ContrastEnv()
    K = A.shape[0]
    raw = np.asarray(env.contrasts)[rng.integers(0, len(env.contrasts), size=n_trials)]
    stim = raw.copy()
    if env.zscore and n_trials > 1 and raw.std() > 0:
        stim = (raw - raw.mean()) / raw.std()
    u = rng.uniform(size=(n_trials, 3)).tolist()
    cum_A = np.cumsum(A, axis=1)
    state = int(rng.integers(0, K))
    states = np.empty(n_trials, dtype=np.int64)
    actions = np.empty(n_trials, dtype=np.int64)
    rewards = np.empty(n_trials)
    prev_c, prev_r = 0.0, 0.0
    for t in range(n_trials):
        uz, uc, ur = u[t]
        if t > 0:
            state = min(int(np.searchsorted(cum_A[state], uz, side="right")), K - 1)
        states[t] = state
        wsls = 0.0 if t == 0 else (prev_c if prev_r > 0 else -prev_c)
        x = np.array([stim[t], 1.0, prev_c, wsls])
        p_right = float(sigmoid(W[state] @ x))
        c = 1.0 if uc < p_right else -1.0
        if raw[t] == 0:
            r = 1.0 if ur < 0.5 else 0.0
        else:
            r = 1.0 if np.sign(raw[t]) == c else 0.0
        actions[t] = 1 if c > 0 else 0
        rewards[t] = r
        prev_c, prev_r = c, r
    seq = TrialSequence("glmhmm", actions, rewards, stim[:, None])
    lat = LatentSequence(np.zeros((n_trials, 0)), (), discrete=states, n_classes=K, extras={"raw_contrast": raw})
    return seq, lat
