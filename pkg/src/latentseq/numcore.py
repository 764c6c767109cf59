"""Seeded randomness and small numerically stable primitives.

Every stochastic draw in the package goes through :class:`Rng`, which wraps a
NumPy ``Generator`` seeded from a ``SeedSequence``.  Sub-streams are derived
from spawn keys, so agent ``i`` of a dataset always sees the same draws no
matter in which order agents are simulated.
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np


class Rng:
    """Reproducible random stream with splittable sub-streams."""

    def __init__(self, seed: int, key: Sequence[int] = ()):
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self.gen = np.random.Generator(np.random.PCG64(seq))

    def substream(self, *key: int) -> "Rng":
        """Independent stream addressed by ``key`` (e.g. an agent index)."""
        return Rng(self.seed, self.key + tuple(key))

    def uniform(self, lo: float = 0.0, hi: float = 1.0, size=None):
        return self.gen.uniform(lo, hi, size)

    def normal(self, mu: float = 0.0, sigma: float = 1.0, size=None):
        return self.gen.normal(mu, sigma, size)

    def beta(self, a: float, b: float, size=None):
        return self.gen.beta(a, b, size)

    def bernoulli(self, p: float, size=None):
        return self.gen.random(size) < p

    def categorical(self, weights, size=None):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size == 0 or np.any(w < 0) or not w.sum() > 0:
            raise ValueError("categorical weights must be a non-empty, non-negative vector")
        cdf = np.cumsum(w / w.sum())
        u = self.gen.random(size)
        return np.minimum(np.searchsorted(cdf, u, side="right"), w.size - 1)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def integers(self, lo: int, hi: int, size=None):
        return self.gen.integers(lo, hi, size)

    def derive_seed(self, *key: int) -> int:
        """A 31-bit integer seed for sub-experiment ``key``."""
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key + tuple(key))
        return int(seq.generate_state(1, np.uint32)[0] >> 1)


def log_sum_exp(xs) -> float:
    """``log(sum(exp(xs)))`` via max-shift; all ``-inf`` gives ``-inf``."""
    x = np.asarray(xs, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("log_sum_exp of an empty vector")
    m = x.max()
    if m == -np.inf:
        return -np.inf
    return float(m + math.log(np.exp(x - m).sum()))


def softmax(xs, inverse_temperature: float = 1.0) -> np.ndarray:
    """Softmax of ``inverse_temperature * xs`` along the last axis."""
    if inverse_temperature < 0:
        raise ValueError("inverse_temperature must be >= 0")
    z = inverse_temperature * np.asarray(xs, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    # branch-free stable logistic
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def log_sigmoid(x):
    x = np.asarray(x, dtype=float)
    return np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))


def softplus(x):
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def finite_difference_gradient(
    f: Callable[[np.ndarray], float], x, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function.

    Raises ``FloatingPointError`` naming the offending coordinate if ``f``
    returns a non-finite value.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.array(x, dtype=float)
    flat = x.reshape(-1)
    grad = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value at coordinate {i}")
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(x.shape)
