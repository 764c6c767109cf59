"""Parameter prior descriptors and the GLM-HMM prior family."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .numcore import Rng


@dataclass(frozen=True)
class Dist:
    """One-dimensional prior.

    kind is one of ``uniform`` (a=lo, b=hi), ``beta`` (shape a, b, rescaled to
    [lo, hi]), ``normal`` (a=mean, b=sd) or ``fixed`` (a=value).
    """

    kind: str
    a: float
    b: float = 0.0
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "beta", "normal", "fixed"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "uniform" and not self.a < self.b:
            raise ValueError("uniform needs lo < hi")
        if self.kind == "beta" and (self.a <= 0 or self.b <= 0 or not self.lo < self.hi):
            raise ValueError("beta needs positive shapes and lo < hi")
        if self.kind == "normal" and self.b < 0:
            raise ValueError("normal needs sd >= 0")

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "Dist":
        return cls("uniform", lo, hi)

    @classmethod
    def beta(cls, a: float, b: float, lo: float = 0.0, hi: float = 1.0) -> "Dist":
        return cls("beta", a, b, lo, hi)

    @classmethod
    def normal(cls, mu: float, sd: float) -> "Dist":
        return cls("normal", mu, sd)

    @classmethod
    def fixed(cls, value: float) -> "Dist":
        return cls("fixed", value)

    def sample(self, rng: Rng) -> float:
        if self.kind == "uniform":
            return float(rng.uniform(self.a, self.b))
        if self.kind == "beta":
            return float(self.lo + (self.hi - self.lo) * rng.beta(self.a, self.b))
        if self.kind == "normal":
            return float(rng.normal(self.a, self.b))
        return float(self.a)

    def logpdf(self, x: float) -> float:
        if self.kind == "uniform":
            return -math.log(self.b - self.a) if self.a <= x <= self.b else -math.inf
        if self.kind == "beta":
            width = self.hi - self.lo
            u = (x - self.lo) / width
            if not 0.0 <= u <= 1.0:
                return -math.inf
            if (u == 0.0 and self.a < 1) or (u == 1.0 and self.b < 1):
                return math.inf
            if (u == 0.0 and self.a > 1) or (u == 1.0 and self.b > 1):
                return -math.inf
            lbeta = math.lgamma(self.a) + math.lgamma(self.b) - math.lgamma(self.a + self.b)
            tail_a = 0.0 if self.a == 1 else (self.a - 1) * math.log(u)
            tail_b = 0.0 if self.b == 1 else (self.b - 1) * math.log1p(-u)
            return tail_a + tail_b - lbeta - math.log(width)
        if self.kind == "normal":
            if self.b == 0:
                return math.inf if x == self.a else -math.inf
            z = (x - self.a) / self.b
            return -0.5 * z * z - math.log(self.b) - 0.5 * math.log(2 * math.pi)
        return math.inf if x == self.a else -math.inf

    def to_dict(self) -> dict:
        return {"kind": self.kind, "a": self.a, "b": self.b, "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d: dict) -> "Dist":
        return cls(d["kind"], d["a"], d.get("b", 0.0), d.get("lo", 0.0), d.get("hi", 1.0))


# GLM weight means per state: [stimulus, bias, previous choice, win-stay/lose-switch].
GLM_STATE_MEANS = {
    "engaged": (6.0, 0.0, 0.3, 0.2),
    "left_biased": (2.0, -3.0, 0.3, 0.2),
    "right_biased": (2.0, 3.0, 0.3, 0.2),
    "win_stay": (2.0, 0.0, 0.0, 3.0),
}

# Stationary state occupancy for each transition-skewness level (3 states).
SKEW_OCCUPANCY = {
    -1: (0.2, 0.4, 0.4),
    0: (1 / 3, 1 / 3, 1 / 3),
    1: (0.6, 0.2, 0.2),
}


@dataclass(frozen=True)
class GlmHmmPrior:
    """Prior over (transition matrix, per-state GLM weights).

    Transitions follow ``A = s I + (1 - s) 1 pi^T`` whose stationary
    distribution is ``pi``; the stickiness ``s`` is drawn per agent.
    """

    n_states: int = 3
    skewness: int = 0
    weight_sigma: float = 0.5
    stickiness: tuple[float, float] = (0.90, 0.98)

    def __post_init__(self):
        if self.n_states not in (3, 4):
            raise ValueError("GLM-HMM prior supports 3 or 4 states")
        if self.skewness not in SKEW_OCCUPANCY:
            raise ValueError("skewness must be -1, 0 or +1")
        if self.weight_sigma < 0:
            raise ValueError("weight_sigma must be >= 0")

    @property
    def state_names(self) -> list[str]:
        names = ["engaged", "left_biased", "right_biased"]
        return names + ["win_stay"] if self.n_states == 4 else names

    def occupancy(self) -> np.ndarray:
        pi = np.array(SKEW_OCCUPANCY[self.skewness], dtype=float)
        if self.n_states == 4:
            pi = np.append(pi * 0.75, 0.25)
        return pi / pi.sum()

    def sample(self, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
        s = rng.uniform(*self.stickiness)
        pi = self.occupancy()
        A = s * np.eye(self.n_states) + (1 - s) * np.outer(np.ones(self.n_states), pi)
        means = np.array([GLM_STATE_MEANS[n] for n in self.state_names])
        W = means + self.weight_sigma * rng.normal(size=means.shape)
        return A, W


@dataclass
class PriorSpec:
    """Per-parameter priors for one model (plus the GLM-HMM family)."""

    model_id: str
    params: dict[str, Dist] = field(default_factory=dict)
    glm: GlmHmmPrior | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "model_id": self.model_id,
            "params": {k: v.to_dict() for k, v in self.params.items()},
        }
        if self.glm is not None:
            out["glm"] = {
                "n_states": self.glm.n_states,
                "skewness": self.glm.skewness,
                "weight_sigma": self.glm.weight_sigma,
                "stickiness": list(self.glm.stickiness),
            }
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "PriorSpec":
        glm = None
        if d.get("glm") is not None:
            g = d["glm"]
            glm = GlmHmmPrior(g["n_states"], g["skewness"], g["weight_sigma"], tuple(g["stickiness"]))
        params = {k: Dist.from_dict(v) for k, v in d.get("params", {}).items()}
        return cls(d["model_id"], params, glm)

    def log_density(self, names, theta) -> float:
        """Sum of log prior densities; parameters without a prior count as flat."""
        total = 0.0
        for name, x in zip(names, theta):
            dist = self.params.get(name)
            if dist is not None:
                total += dist.logpdf(float(x))
        return total
