"""Adam training with early stopping, amortized inference, checkpoints."""
from __future__ import annotations

import copy
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dataset import DatasetBundle, read_array, write_array
from ..numcore import Rng
from .network import (
    DropoutMasks,
    NetworkConfig,
    NetworkError,
    Targets,
    backward,
    check_weights,
    forward,
    init_weights,
    loss_sums,
)

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stop_reason: str = ""
    wall_clock: float = 0.0
    head_weighting: str = "unweighted sum"
    flags: list[str] = field(default_factory=list)

    @property
    def best_val(self) -> float:
        return self.val_loss[self.best_epoch]

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "best_epoch": self.best_epoch,
            "stop_reason": self.stop_reason,
            "wall_clock": self.wall_clock,
            "head_weighting": self.head_weighting,
            "flags": self.flags,
        }


class Adam:
    def __init__(self, config: NetworkConfig, weights: dict):
        self.lr = config.learning_rate
        self.b1, self.b2, self.eps = config.adam_beta1, config.adam_beta2, config.adam_eps
        self.clip = config.clip_norm
        self.m = {k: np.zeros_like(v) for k, v in weights.items()}
        self.v = {k: np.zeros_like(v) for k, v in weights.items()}
        self.t = 0

    def step(self, weights: dict, grads: dict) -> float:
        """In-place update; returns the pre-clip global gradient norm."""
        norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
        scale = self.clip / norm if self.clip and norm > self.clip else 1.0
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k in sorted(weights):
            g = grads[k] * scale
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            weights[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            if not np.all(np.isfinite(weights[k])):
                raise TrainingError(f"non-finite weights in block {k} after step {self.t}")
        return norm


def _check_bundle(config: NetworkConfig, b: DatasetBundle) -> None:
    if b.Y.shape[2] != config.input_dim:
        raise NetworkError(f"bundle input dim {b.Y.shape[2]} != network input dim {config.input_dim}")
    if config.target_dim and (b.Zc is None or b.Zc.shape[2] != config.target_dim):
        raise NetworkError(f"bundle has no {config.target_dim}-channel continuous targets")
    if config.n_classes and (b.Zd is None or b.n_classes != config.n_classes):
        raise NetworkError(f"bundle discrete targets do not have {config.n_classes} classes")


def batch_arrays(config: NetworkConfig, b: DatasetBundle, idx):
    """Float64 inputs, targets and mask for agents ``idx`` (kept in the given order)."""
    idx = np.asarray(idx)
    T = int(b.lengths[idx].max())
    Y = b.Y[idx, :T].astype(np.float64)
    mask = np.arange(T)[None, :] < b.lengths[idx][:, None]
    tg = Targets(
        b.Zc[idx, :T].astype(np.float64) if config.target_dim else None,
        b.Zd[idx, :T] if config.n_classes else None,
    )
    return Y, tg, mask


def gradient(weights, config: NetworkConfig, b: DatasetBundle, idx, dropout=None):
    """Loss and gradients over agents ``idx`` reduced in canonical (ascending index) order."""
    Y, tg, mask = batch_arrays(config, b, np.sort(np.asarray(idx)))
    return backward(weights, config, Y, tg, mask, dropout)


def evaluate_loss(weights, config: NetworkConfig, b: DatasetBundle) -> float:
    """Deterministic loss over a whole bundle (no dropout), chunked by batch size."""
    sums: dict[str, float] = {}
    counts: dict[str, float] = {}
    for lo in range(0, b.n_agents, config.batch_size):
        idx = np.arange(lo, min(lo + config.batch_size, b.n_agents))
        Y, tg, mask = batch_arrays(config, b, idx)
        s, c = loss_sums(forward(weights, config, Y, mask), tg, mask, config)
        for k in s:
            sums[k] = sums.get(k, 0.0) + s[k]
            counts[k] = counts.get(k, 0.0) + c[k]
    return float(sum(sums[k] / counts[k] for k in sums))


def train(
    config: NetworkConfig,
    train_set: DatasetBundle,
    val_set: DatasetBundle | None,
    seed: int,
    init: dict | None = None,
) -> tuple[dict, TrainReport]:
    """Minibatch Adam with per-epoch seeded shuffling and early stopping on validation loss.

    Without a validation bundle the training loss drives early stopping.
    Returns the weights from the best epoch.
    """
    _check_bundle(config, train_set)
    if val_set is not None:
        _check_bundle(config, val_set)
        if val_set.model_id != train_set.model_id:
            raise NetworkError("train and validation bundles come from different models")
    weights = copy.deepcopy(init) if init is not None else init_weights(config, seed)
    check_weights(weights, config)
    opt = Adam(config, weights)
    rng = Rng(seed)
    report = TrainReport()
    best = None
    best_loss = np.inf
    stale = plateau = 0
    t0 = time.perf_counter()
    n = train_set.n_agents
    for epoch in range(config.max_epochs):
        perm = rng.substream(1, epoch).permutation(n)
        total, count = 0.0, 0
        for bi, lo in enumerate(range(0, n, config.batch_size)):
            idx = np.sort(perm[lo : lo + config.batch_size])
            Y, tg, mask = batch_arrays(config, train_set, idx)
            drop = DropoutMasks.sample(config, len(idx), Y.shape[1], rng.substream(2, epoch, bi))
            value, _, grads = backward(weights, config, Y, tg, mask, drop)
            if not np.isfinite(value):
                raise TrainingError(f"non-finite training loss at epoch {epoch}")
            opt.step(weights, grads)
            total += value * len(idx)
            count += len(idx)
        report.train_loss.append(total / count)
        val = evaluate_loss(weights, config, val_set) if val_set is not None else report.train_loss[-1]
        if not np.isfinite(val):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        report.val_loss.append(val)
        log.info("epoch %d train %.5f val %.5f", epoch, report.train_loss[-1], val)
        if val < best_loss:
            best_loss, best, stale, plateau = val, copy.deepcopy(weights), 0, 0
            report.best_epoch = epoch
        else:
            stale += 1
            plateau += 1
            if stale >= config.patience:
                report.stop_reason = "patience"
                break
            if config.lr_decay_patience and plateau >= config.lr_decay_patience:
                opt.lr *= config.lr_decay
                plateau = 0
                log.info("learning rate lowered to %.3g", opt.lr)
    else:
        report.stop_reason = "max_epochs"
    if len(report.val_loss) >= 10 and min(report.val_loss[1:10]) >= report.val_loss[0]:
        report.flags.append("loss did not decrease over the first 10 epochs")
    report.wall_clock = time.perf_counter() - t0
    return best, report


@dataclass
class Prediction:
    """Per-agent network outputs, padded to the bundle length."""

    lengths: np.ndarray
    continuous: np.ndarray | None = None
    probs: np.ndarray | None = None
    aleatoric: np.ndarray | None = None
    epistemic: np.ndarray | None = None

    @property
    def labels(self) -> np.ndarray | None:
        return None if self.probs is None else np.argmax(self.probs, axis=-1)


def infer(weights, config: NetworkConfig, Y, lengths=None) -> Prediction:
    """Amortized predictions for encoded sequences ``Y`` (N x T x D)."""
    Y = np.asarray(Y)
    if Y.ndim == 2:
        Y = Y[None]
    if Y.shape[-1] != config.input_dim:
        raise NetworkError(f"input dim {Y.shape[-1]} != network input dim {config.input_dim}")
    N, T = Y.shape[:2]
    lengths = np.full(N, T, dtype=np.int32) if lengths is None else np.asarray(lengths, dtype=np.int32)
    pred = Prediction(lengths)
    C = config.target_dim
    if C:
        pred.continuous = np.zeros((N, T, C))
    if config.n_classes:
        pred.probs = np.zeros((N, T, config.n_classes))
    if config.evidential_dim:
        pred.aleatoric = np.zeros((N, T, C))
        pred.epistemic = np.zeros((N, T, C))
    for lo in range(0, N, config.batch_size):
        sl = slice(lo, min(lo + config.batch_size, N))
        Tb = int(lengths[sl].max())
        mask = np.arange(Tb)[None, :] < lengths[sl][:, None]
        out = forward(weights, config, Y[sl, :Tb].astype(np.float64), mask)
        if config.continuous_dim:
            pred.continuous[sl, :Tb] = out.continuous
        if config.n_classes:
            pred.probs[sl, :Tb] = out.probs
        if config.evidential_dim:
            ev = out.evidential
            pred.continuous[sl, :Tb] = ev["gamma"]
            pred.aleatoric[sl, :Tb] = ev["beta"] / (ev["alpha"] - 1.0)
            pred.epistemic[sl, :Tb] = ev["beta"] / (ev["nu"] * (ev["alpha"] - 1.0))
    return pred


CHECKPOINT_VERSION = 1


def save_checkpoint(weights, config: NetworkConfig, path, report: TrainReport | None = None) -> Path:
    check_weights(weights, config)
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for k, v in weights.items():
        write_array(path / f"{k}.bin", v, "f64")
    manifest = {
        "format": "lasenet-checkpoint",
        "version": CHECKPOINT_VERSION,
        "config": config.to_dict(),
        "blocks": {k: list(v.shape) for k, v in weights.items()},
    }
    if report is not None:
        manifest["train_report"] = report.to_dict()
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_checkpoint(path, expect: NetworkConfig | None = None) -> tuple[dict, NetworkConfig]:
    """Read a checkpoint; ``expect`` (if given) must equal the stored architecture."""
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except FileNotFoundError as e:
        raise NetworkError(f"{path}: no checkpoint manifest") from e
    if manifest.get("format") != "lasenet-checkpoint" or manifest.get("version") != CHECKPOINT_VERSION:
        raise NetworkError(f"{path}: not a version-{CHECKPOINT_VERSION} checkpoint")
    config = NetworkConfig.from_dict(manifest["config"])
    if expect is not None:
        for key in ("input_dim", "gru_units", "continuous_dim", "n_classes", "evidential_dim"):
            if getattr(expect, key) != getattr(config, key):
                raise NetworkError(f"checkpoint {key}={getattr(config, key)} but expected {getattr(expect, key)}")
    weights = {k: read_array(path / f"{k}.bin", "f64") for k in manifest["blocks"]}
    check_weights(weights, config)
    return weights, config
