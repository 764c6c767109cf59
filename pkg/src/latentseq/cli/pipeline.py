"""Glue between datasets, the network and the baselines, producing prediction tables."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .. import baselines as bl
from ..cogmodels import SPECS, derive_latents, unpack_glmhmm
from ..dataset import DatasetBundle, DatasetError, split
from ..lasenet import NetworkConfig, infer, train
from ..priors import GlmHmmPrior, PriorSpec
from .predictions import PredictionTable

BASELINES = {
    "4prl": ("mle", "map"),
    "metarl": ("mle", "map"),
    "hrl": ("pf",),
    "weber": ("pf",),
    "glmhmm": ("em",),
}


class UsageError(ValueError):
    pass


def agent_names(bundle: DatasetBundle) -> list[str]:
    return [str(i) for i in range(bundle.n_agents)]


def network_config_for(bundle: DatasetBundle, evidential: bool = False, **overrides) -> NetworkConfig:
    """Heads follow the bundle's latents: continuous channels and/or a class label."""
    C = len(bundle.continuous_names)
    K = bundle.n_classes if bundle.Zd is not None else 0
    heads = {"continuous_dim": 0 if evidential else C, "evidential_dim": C if evidential else 0, "n_classes": K}
    known = set(NetworkConfig.__dataclass_fields__)
    bad = set(overrides) - known
    if bad:
        raise UsageError(f"unknown network settings: {sorted(bad)}")
    return NetworkConfig(input_dim=bundle.input_dim, **{**heads, **overrides})


def train_network(bundle: DatasetBundle, config: NetworkConfig, seed: int, val_fraction: float = 0.1, init=None):
    tr, va = split(bundle, val_fraction, seed)
    return train(config, tr, va, seed, init=init)


def network_predictions(weights, config: NetworkConfig, bundle: DatasetBundle) -> PredictionTable:
    pred = infer(weights, config, bundle.Y, bundle.lengths)
    return PredictionTable(
        agent_names(bundle),
        bundle.lengths.copy(),
        tuple(bundle.continuous_names) if config.target_dim else (),
        pred.continuous,
        pred.probs,
        pred.aleatoric,
        pred.epistemic,
    )


def _empty_table(bundle, names, n_classes):
    N, T = bundle.n_agents, bundle.n_trials
    return PredictionTable(
        agent_names(bundle),
        bundle.lengths.copy(),
        tuple(names),
        np.zeros((N, T, len(names))) if names else None,
        np.zeros((N, T, n_classes)) if n_classes else None,
    )


def run_baseline(
    bundle: DatasetBundle,
    method: str,
    seed: int,
    known_params: bool = False,
    n_restarts: int = 10,
    n_particles: int = 1000,
    n_states: int | None = None,
    prior: PriorSpec | None = None,
    em_restarts: int = 5,
) -> tuple[PredictionTable, list[str], list[list]]:
    """Baseline predictions plus a fit table (header, rows)."""
    mid = bundle.model_id
    if method not in BASELINES[mid]:
        pairs = "; ".join(f"{m}: {', '.join(b)}" for m, b in BASELINES.items())
        raise UsageError(f"baseline {method!r} unsupported for {mid}; supported pairs: {pairs}")
    if method == "pf" and not known_params:
        raise UsageError("particle filters run with known parameters; pass --known-params")
    if method == "pf" and bundle.theta.shape[1] == 0:
        raise DatasetError("bundle carries no generating parameters for known-parameter filtering")
    if method in ("mle", "map"):
        return _fit_tractable(bundle, method, seed, n_restarts, prior)
    if method == "pf":
        return _filter(bundle, seed, n_particles)
    return _em(bundle, seed, n_states or bundle.n_classes, em_restarts)


def _fit_tractable(bundle, method, seed, n_restarts, prior):
    mid = bundle.model_id
    names = SPECS[mid].param_names
    n_classes = 2 if mid == "metarl" else 0
    table = _empty_table(bundle, ("q_chosen",), n_classes)
    if method == "map" and prior is None:
        prior = bundle.prior
    rows = []
    for i in range(bundle.n_agents):
        seq = bundle.sequence(i)
        if method == "mle":
            fit = bl.fit_mle(mid, seq, n_restarts=n_restarts, seed=seed + i)
        else:
            fit = bl.fit_map(mid, seq, prior, n_restarts=n_restarts, seed=seed + i)
        L = seq.n_trials
        table.continuous[i, :L, 0] = derive_latents(mid, fit.params, seq).continuous[:, 0]
        if n_classes:
            pe = bl.metarl_state_posterior(fit.params, seq)
            table.probs[i, :L, 0] = 1.0 - pe
            table.probs[i, :L, 1] = pe
        rows.append([str(i), *[f"{v:.10g}" for v in fit.params.theta], f"{fit.objective:.10g}", int(fit.converged)])
    return table, ["agent", *names, "objective", "converged"], rows


def _filter(bundle, seed, n_particles):
    mid = bundle.model_id
    names = bundle.continuous_names
    table = _empty_table(bundle, names, bundle.n_classes)
    rows = []
    for i in range(bundle.n_agents):
        seq = bundle.sequence(i)
        run = bl.particle_filter_hrl if mid == "hrl" else bl.particle_filter_weber
        out = run(bundle.params(i), seq, n_particles=n_particles, seed=seed + i)
        L = seq.n_trials
        table.continuous[i, :L, 0] = out.expected_continuous
        table.probs[i, :L] = out.class_probs
        rows.append([str(i), f"{np.mean(out.ess):.10g}", int(out.resampled.sum())])
    return table, ["agent", "mean_ess", "n_resamples"], rows


def _em(bundle, seed, K, em_restarts):
    seqs = [bundle.sequence(i) for i in range(bundle.n_agents)]
    res = bl.fit_glmhmm_em(seqs, K, seed=seed, n_restarts=em_restarts)
    A, W = unpack_glmhmm(res.params.theta)
    names = GlmHmmPrior(n_states=K).state_names if K in (3, 4) else [f"s{k}" for k in range(K)]
    if K in (3, 4):
        perm = bl.align_states_to_prototypes(W, names)
    else:
        perm = np.arange(K)
    A, W = A[np.ix_(perm, perm)], W[perm]
    table = _empty_table(bundle, (), K)
    for i, post in enumerate(res.posteriors):
        table.probs[i, : post.gammas.shape[0]] = post.gammas[:, perm]
    rows = []
    for j in range(K):
        rows += [[f"A_{j}_{k}", f"{A[j, k]:.10g}"] for k in range(K)]
    for j in range(K):
        rows += [[f"w_{names[j]}_{r}", f"{W[j, c]:.10g}"] for c, r in enumerate(("stimulus", "bias", "prev_choice", "wsls"))]
    rows.append(["loglik", f"{res.loglik:.10g}"])
    rows.append(["iterations", str(res.n_iters)])
    return table, ["name", "value"], rows


def write_table(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path
