"""Evaluation metrics for latent-variable estimates and parameter recovery."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PROB_FLOOR = 1e-12


def _mask(mask, n):
    if mask is None:
        return np.ones(n, dtype=bool)
    m = np.asarray(mask, dtype=bool)
    if m.shape != (n,):
        raise ValueError("mask length differs from the series")
    return m


def rmse(z_true, z_pred, mask=None) -> float:
    a = np.asarray(z_true, dtype=float).ravel()
    b = np.asarray(z_pred, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    m = _mask(mask, a.size)
    if not m.any():
        raise ValueError("rmse over an empty mask")
    d = a[m] - b[m]
    return float(math.sqrt(np.mean(d * d)))


def log_loss(labels, probs, mask=None) -> float:
    """Mean negative log-probability of the true class, probabilities clipped at 1e-12."""
    y = np.asarray(labels, dtype=np.int64).ravel()
    p = np.asarray(probs, dtype=float)
    if p.ndim != 2 or p.shape[0] != y.size:
        raise ValueError("probs must be (T, n_classes) matching labels")
    if y.size and (y.min() < 0 or y.max() >= p.shape[1]):
        raise ValueError(f"label outside [0, {p.shape[1]})")
    m = _mask(mask, y.size)
    if not m.any():
        raise ValueError("log_loss over an empty mask")
    picked = np.clip(p[np.arange(y.size), y], PROB_FLOOR, 1.0)
    return float(-np.mean(np.log(picked[m])))


def argmax_labels(probs) -> np.ndarray:
    """Most probable class per row; ties go to the lowest index."""
    return np.argmax(np.asarray(probs), axis=-1)


def balanced_accuracy(labels, preds, n_classes: int | None = None, mask=None) -> float:
    """Macro-averaged recall over the classes present in ``labels``."""
    y = np.asarray(labels, dtype=np.int64).ravel()
    yhat = np.asarray(preds, dtype=np.int64).ravel()
    if y.shape != yhat.shape:
        raise ValueError("labels and predictions differ in length")
    m = _mask(mask, y.size)
    y, yhat = y[m], yhat[m]
    if y.size == 0:
        raise ValueError("balanced_accuracy with no labels")
    if n_classes is not None and (y.max() >= n_classes or yhat.max() >= n_classes or min(y.min(), yhat.min()) < 0):
        raise ValueError("label outside [0, n_classes)")
    recalls = [np.mean(yhat[y == c] == c) for c in np.unique(y)]
    return float(np.mean(recalls))


def accuracy(labels, preds, mask=None) -> float:
    y = np.asarray(labels).ravel()
    yhat = np.asarray(preds).ravel()
    m = _mask(mask, y.size)
    if not m.any():
        raise ValueError("accuracy with no labels")
    return float(np.mean(y[m] == yhat[m]))


@dataclass
class RecoveryStats:
    r: float
    r2: float
    slope: float
    intercept: float
    defined: bool = True


def recovery_stats(theta_true, theta_hat, names=None) -> dict[str, RecoveryStats]:
    """Pearson r, R^2 of the least-squares line, slope and intercept per parameter.

    A parameter with zero spread in the truth (or the estimates) yields
    ``defined=False`` and NaN-free zeros instead of an undefined correlation.
    """
    X = np.asarray(theta_true, dtype=float)
    Y = np.asarray(theta_hat, dtype=float)
    if X.ndim == 1:
        X, Y = X[:, None], Y[:, None]
    if X.shape != Y.shape:
        raise ValueError("true and estimated parameter arrays differ in shape")
    if X.shape[0] < 3:
        raise ValueError("recovery statistics need at least 3 agents")
    names = list(names) if names is not None else [f"p{j}" for j in range(X.shape[1])]
    out = {}
    for j, name in enumerate(names):
        x, y = X[:, j], Y[:, j]
        dx, dy = x - x.mean(), y - y.mean()
        sxx, syy, sxy = float(dx @ dx), float(dy @ dy), float(dx @ dy)
        if sxx == 0:
            out[name] = RecoveryStats(0.0, 0.0, 0.0, float(y.mean()), defined=False)
            continue
        slope = sxy / sxx
        intercept = float(y.mean() - slope * x.mean())
        if syy == 0:
            out[name] = RecoveryStats(0.0, 0.0, slope, intercept, defined=False)
            continue
        r = sxy / math.sqrt(sxx * syy)
        resid = y - (intercept + slope * x)
        r2 = 1.0 - float(resid @ resid) / syy
        out[name] = RecoveryStats(r, r2, slope, intercept)
    return out


@dataclass
class EvalReport:
    """Per-agent metric rows plus an aggregate (mean and 2 SD) summary."""

    columns: list[str]
    rows: list[dict] = field(default_factory=list)

    def add(self, agent, **values) -> None:
        self.rows.append({"agent": agent, **values})

    def aggregate(self) -> dict[str, tuple[float, float]]:
        agg = {}
        for c in self.columns:
            vals = np.array([r[c] for r in self.rows if c in r], dtype=float)
            if vals.size:
                sd = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
                agg[c] = (float(vals.mean()), 2.0 * sd)
        return agg

    def mean(self, column: str) -> float:
        return self.aggregate()[column][0]

    def write_csv(self, path) -> Path:
        path = Path(path)
        agg = self.aggregate()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["agent", *self.columns])
            for r in self.rows:
                w.writerow([r["agent"], *(_fmt(r.get(c)) for c in self.columns)])
            w.writerow(["mean", *(_fmt(agg[c][0]) if c in agg else "" for c in self.columns)])
            w.writerow(["2sd", *(_fmt(agg[c][1]) if c in agg else "" for c in self.columns)])
        return path


def _fmt(x) -> str:
    if x is None:
        return ""
    return f"{float(x):.10g}"


def evaluate_agent(
    z_true_c=None,
    z_pred_c=None,
    channel_names=(),
    labels=None,
    probs=None,
    mask=None,
) -> dict[str, float]:
    """All applicable metrics for one agent's sequence."""
    out: dict[str, float] = {}
    if z_true_c is not None and len(channel_names):
        zt = np.asarray(z_true_c, dtype=float).reshape(len(mask) if mask is not None else -1, -1)
        zp = np.asarray(z_pred_c, dtype=float).reshape(zt.shape)
        for j, name in enumerate(channel_names):
            out[f"rmse_{name}"] = rmse(zt[:, j], zp[:, j], mask)
    if labels is not None and probs is not None:
        n_classes = np.asarray(probs).shape[-1]
        preds = argmax_labels(probs)
        out["log_loss"] = log_loss(labels, probs, mask)
        out["balanced_accuracy"] = balanced_accuracy(labels, preds, n_classes, mask)
        out["accuracy"] = accuracy(labels, preds, mask)
    return out
