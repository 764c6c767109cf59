"""Per-trial prediction tables: one row per (agent, trial)."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..dataset import DatasetBundle, DatasetError
from ..metrics import EvalReport, evaluate_agent


@dataclass
class PredictionTable:
    """Predictions for a set of agents, each with its own length."""

    agents: list[str]
    lengths: np.ndarray
    continuous_names: tuple[str, ...] = ()
    continuous: np.ndarray | None = None  # N x T x C
    probs: np.ndarray | None = None  # N x T x K
    aleatoric: np.ndarray | None = None
    epistemic: np.ndarray | None = None

    @property
    def n_classes(self) -> int:
        return 0 if self.probs is None else self.probs.shape[-1]

    def columns(self) -> list[str]:
        cols = ["agent", "trial", *self.continuous_names]
        cols += [f"p_{k}" for k in range(self.n_classes)]
        if self.n_classes:
            cols.append("label")
        if self.aleatoric is not None:
            cols += [f"aleatoric_{n}" for n in self.continuous_names]
            cols += [f"epistemic_{n}" for n in self.continuous_names]
        return cols


def _fmt(x: float) -> str:
    return f"{float(x):.10g}"


def write_predictions(table: PredictionTable, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.columns())
        for i, agent in enumerate(table.agents):
            for t in range(int(table.lengths[i])):
                row = [agent, t]
                if table.continuous_names:
                    row += [_fmt(v) for v in table.continuous[i, t]]
                if table.n_classes:
                    p = table.probs[i, t]
                    row += [_fmt(v) for v in p]
                    row.append(int(np.argmax(p)))
                if table.aleatoric is not None:
                    row += [_fmt(v) for v in table.aleatoric[i, t]]
                    row += [_fmt(v) for v in table.epistemic[i, t]]
                w.writerow(row)
    return path


def read_predictions(path) -> PredictionTable:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration as e:
            raise DatasetError(f"{path}: empty predictions file") from e
        if header[:2] != ["agent", "trial"]:
            raise DatasetError(f"{path}: predictions must start with agent,trial columns")
        rows = list(reader)
    pcols = [j for j, c in enumerate(header) if c.startswith("p_")]
    special = set(pcols) | {0, 1} | {j for j, c in enumerate(header) if c == "label" or c.startswith(("aleatoric_", "epistemic_"))}
    ccols = [j for j in range(len(header)) if j not in special]
    by_agent: dict[str, list[list[str]]] = {}
    for ln, r in enumerate(rows, start=2):
        if len(r) != len(header):
            raise DatasetError(f"{path}:{ln}: expected {len(header)} fields, got {len(r)}")
        by_agent.setdefault(r[0], []).append(r)
    agents = list(by_agent)
    lengths = np.array([len(by_agent[a]) for a in agents], dtype=np.int32)
    T = int(lengths.max()) if agents else 0
    N = len(agents)

    def block(cols):
        if not cols:
            return None
        out = np.zeros((N, T, len(cols)))
        for i, a in enumerate(agents):
            out[i, : lengths[i]] = np.array([[float(r[j]) for j in cols] for r in by_agent[a]])
        return out

    acols = [j for j, c in enumerate(header) if c.startswith("aleatoric_")]
    ecols = [j for j, c in enumerate(header) if c.startswith("epistemic_")]
    return PredictionTable(
        agents,
        lengths,
        tuple(header[j] for j in ccols),
        block(ccols),
        block(pcols),
        block(acols),
        block(ecols),
    )


def evaluate_table(table: PredictionTable, truth: DatasetBundle) -> EvalReport:
    """Score predictions against a simulated bundle (agents named by index)."""
    names = [str(i) for i in range(truth.n_agents)]
    index = {a: i for i, a in enumerate(table.agents)}
    missing = [a for a in names if a not in index]
    if missing:
        shown = ", ".join(missing[:20]) + (" ..." if len(missing) > 20 else "")
        raise DatasetError(f"predictions missing {len(missing)} agents: {shown}")
    channels = [n for n in table.continuous_names if n in truth.continuous_names]
    use_classes = table.n_classes > 0 and truth.Zd is not None
    if use_classes and table.n_classes != truth.n_classes:
        raise DatasetError(f"predictions have {table.n_classes} classes, truth has {truth.n_classes}")
    columns = [f"rmse_{n}" for n in channels]
    if use_classes:
        columns += ["log_loss", "balanced_accuracy", "accuracy"]
    report = EvalReport(columns)
    for i, name in enumerate(names):
        j = index[name]
        L = int(truth.lengths[i])
        if table.lengths[j] != L:
            raise DatasetError(f"agent {name}: {table.lengths[j]} predicted trials, {L} in truth")
        zt = zp = None
        if channels:
            ti = [truth.continuous_names.index(n) for n in channels]
            pi = [table.continuous_names.index(n) for n in channels]
            zt, zp = truth.Zc[i, :L][:, ti], table.continuous[j, :L][:, pi]
        metrics = evaluate_agent(
            zt,
            zp,
            channels,
            truth.Zd[i, :L] if use_classes else None,
            table.probs[j, :L] if use_classes else None,
            np.ones(L, dtype=bool),
        )
        report.add(name, **metrics)
    return report
