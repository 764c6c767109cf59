from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MODEL_IDS = ("4prl", "metarl", "hrl", "weber", "glmhmm")

# Encoded network input width per model.
INPUT_DIMS = {"4prl": 2, "metarl": 2, "hrl": 5, "weber": 9, "glmhmm": 3}
STIMULUS_DIMS = {"4prl": 0, "metarl": 0, "hrl": 3, "weber": 3, "glmhmm": 1}
N_ACTIONS = {"4prl": 2, "metarl": 2, "hrl": 2, "weber": 4, "glmhmm": 2}


class ModelError(ValueError):
    """Invalid parameters or data for a cognitive model."""


def check_model_id(model_id: str) -> str:
    if model_id not in MODEL_IDS:
        raise ModelError(f"unknown model {model_id!r}; expected one of {', '.join(MODEL_IDS)}")
    return model_id


@dataclass
class TrialSequence:
    """Observable behaviour of one agent.

    ``actions`` are integer codes (0 = left / first action), ``rewards`` are
    0/1 and ``stimuli`` holds the raw per-trial stimulus features with the
    model's stimulus width (zero columns for the bandit models).
    """

    model_id: str
    actions: np.ndarray
    rewards: np.ndarray
    stimuli: np.ndarray

    def __post_init__(self):
        check_model_id(self.model_id)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.rewards = np.asarray(self.rewards, dtype=float)
        T = self.actions.shape[0]
        self.stimuli = np.asarray(self.stimuli, dtype=float).reshape(T, -1) if T else np.zeros(
            (0, STIMULUS_DIMS[self.model_id])
        )
        if self.rewards.shape != (T,):
            raise ModelError("actions and rewards must have equal length")
        if self.stimuli.shape[1] != STIMULUS_DIMS[self.model_id]:
            raise ModelError(
                f"{self.model_id} expects {STIMULUS_DIMS[self.model_id]} stimulus columns, "
                f"got {self.stimuli.shape[1]}"
            )
        if T and (self.actions.min() < 0 or self.actions.max() >= N_ACTIONS[self.model_id]):
            raise ModelError("action code outside the model's action set")
        if not np.all((self.rewards == 0) | (self.rewards == 1)):
            raise ModelError("rewards must be 0 or 1")

    @property
    def n_trials(self) -> int:
        return int(self.actions.shape[0])

    def encode(self) -> np.ndarray:
        return encode(self)


@dataclass
class LatentSequence:
    """Ground-truth (or estimated) per-trial latent variables."""

    continuous: np.ndarray  # T x C
    continuous_names: tuple[str, ...] = ()
    discrete: np.ndarray | None = None  # T labels
    n_classes: int = 0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.continuous = np.asarray(self.continuous, dtype=float)
        if self.continuous.ndim == 1:
            self.continuous = self.continuous[:, None]
        if self.continuous.shape[1] != len(self.continuous_names):
            raise ModelError("continuous channel count does not match names")
        if self.discrete is not None:
            self.discrete = np.asarray(self.discrete, dtype=np.int64)
            if self.discrete.size and (self.discrete.min() < 0 or self.discrete.max() >= self.n_classes):
                raise ModelError("discrete label outside [0, n_classes)")


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    param_names: tuple[str, ...]
    bounds: tuple[tuple[float, float], ...]
    continuous_names: tuple[str, ...]
    n_classes: int

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    @property
    def input_dim(self) -> int:
        return INPUT_DIMS[self.model_id]


@dataclass
class ModelParams:
    model_id: str
    theta: np.ndarray

    def __post_init__(self):
        from . import SPECS

        check_model_id(self.model_id)
        self.theta = np.asarray(self.theta, dtype=float).ravel()
        spec = SPECS[self.model_id]
        if self.model_id == "glmhmm":
            validate_glmhmm_theta(self.theta)
            return
        if self.theta.size != spec.n_params:
            raise ModelError(f"{self.model_id} expects {spec.n_params} parameters, got {self.theta.size}")
        for name, x, (lo, hi) in zip(spec.param_names, self.theta, spec.bounds):
            if not lo <= x <= hi:
                raise ModelError(f"parameter {name}={x} outside bounds [{lo}, {hi}]")

    def as_dict(self) -> dict[str, float]:
        from . import SPECS

        if self.model_id == "glmhmm":
            names = glmhmm_param_names(glmhmm_n_states(self.theta.size))
        else:
            names = SPECS[self.model_id].param_names
        return dict(zip(names, map(float, self.theta)))


def glmhmm_n_states(n: int) -> int:
    # n = K*K + 4*K
    k = int(round(-2 + np.sqrt(4 + n)))
    if k < 1 or k * k + 4 * k != n:
        raise ModelError(f"GLM-HMM parameter vector of length {n} is not K*K + 4*K")
    return k


def glmhmm_param_names(k: int) -> tuple[str, ...]:
    trans = tuple(f"A{j}{i}" for j in range(k) for i in range(k))
    return trans + tuple(f"w{j}_{n}" for j in range(k) for n in ("stim", "bias", "prev", "wsls"))


def pack_glmhmm(A, W) -> np.ndarray:
    return np.concatenate([np.asarray(A, float).ravel(), np.asarray(W, float).ravel()])


def unpack_glmhmm(theta) -> tuple[np.ndarray, np.ndarray]:
    theta = np.asarray(theta, dtype=float)
    k = glmhmm_n_states(theta.size)
    return theta[: k * k].reshape(k, k), theta[k * k :].reshape(k, 4)


def validate_glmhmm_theta(theta) -> None:
    A, W = unpack_glmhmm(theta)
    if np.any(A < 0) or np.any(np.abs(A.sum(axis=1) - 1) > 1e-9):
        raise ModelError("transition matrix rows must be non-negative and sum to 1")
    if not np.all(np.isfinite(W)):
        raise ModelError("GLM weights must be finite")


def encode(seq: TrialSequence) -> np.ndarray:
    """Network input matrix (T x input_dim)."""
    a = seq.actions
    r = seq.rewards[:, None]
    if seq.model_id == "weber":
        # scaled action code, reward, then the 7-d block: stimulus one-hot + action one-hot
        return np.hstack([(2.0 * a / 3.0 - 1.0)[:, None], r, seq.stimuli, np.eye(4)[a]])
    return np.hstack([(2.0 * a - 1.0)[:, None], r, seq.stimuli])
