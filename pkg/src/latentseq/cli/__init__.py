"""``latentseq`` command line: simulate, train, infer, baseline, evaluate, bench.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
Settings come from an optional JSON config file; command-line flags win.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from .. import dataset
from ..baselines import EMError, FilterError, FitError
from ..cogmodels import MODEL_IDS, ModelError
from ..dataset import DatasetError
from ..lasenet import NetworkError, TrainingError, load_checkpoint, save_checkpoint
from ..priors import PriorSpec
from .bench import SCALES, SUITES, run_suite
from .pipeline import (
    BASELINES,
    UsageError,
    network_config_for,
    network_predictions,
    run_baseline,
    train_network,
    write_table,
)
from .predictions import evaluate_table, read_predictions, write_predictions

OUTPUT_ENV = "LATENTSEQ_OUTPUT"
EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4

log = logging.getLogger("latentseq")

CONFIG_KEYS = {
    "model_id",
    "prior",
    "n_agents",
    "n_trials",
    "val_fraction",
    "network",
    "baseline",
    "seed",
    "output_dir",
}


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise UsageError(f"config file {path} not found") from e
    except json.JSONDecodeError as e:
        raise UsageError(f"config file {path}: {e}") from e
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def pick(flag, cfg: dict, key: str, default=None):
    """Flag value if given, else config value, else default."""
    if flag is not None:
        return flag
    return cfg.get(key, default)


def _out_dir(arg, cfg, name: str) -> Path:
    if arg is not None:
        return Path(arg)
    if cfg.get("output_dir"):
        return Path(cfg["output_dir"])
    return output_root() / name


# ---------------------------------------------------------------- commands


def cmd_simulate(args, cfg) -> int:
    model = pick(args.model, cfg, "model_id")
    if model is None:
        raise UsageError("--model is required")
    n_agents = pick(args.agents, cfg, "n_agents", 1000)
    n_trials = pick(args.trials, cfg, "n_trials", 300)
    seed = pick(args.seed, cfg, "seed")
    if seed is None:
        raise UsageError("--seed is required (no clock-based seeding)")
    if n_agents < 1 or n_trials < 1:
        raise UsageError("--agents and --trials must be >= 1")
    prior = None
    if args.prior or cfg.get("prior"):
        raw = json.loads(Path(args.prior).read_text()) if args.prior else cfg["prior"]
        prior = PriorSpec.from_dict(raw)
    out = _out_dir(args.out, cfg, f"{model}_sim_{seed}")
    bundle = dataset.generate(model, prior, n_agents, n_trials, seed)
    dataset.save(bundle, out, force=args.force)
    summary = bundle.manifest()
    print(json.dumps({k: summary[k] for k in ("model_id", "n_agents", "n_trials", "input_dim", "latent", "seed")}))
    print(out)
    return 0


def cmd_train(args, cfg) -> int:
    bundle = dataset.load(args.data)
    net_cfg = dict(cfg.get("network", {}))
    for flag, key in (
        ("units", "gru_units"),
        ("lr", "learning_rate"),
        ("batch_size", "batch_size"),
        ("max_epochs", "max_epochs"),
        ("patience", "patience"),
        ("lr_decay_patience", "lr_decay_patience"),
        ("dropout_rnn", "dropout_rnn"),
        ("dropout_mlp1", "dropout_mlp1"),
        ("dropout_mlp2", "dropout_mlp2"),
    ):
        v = getattr(args, flag)
        if v is not None:
            net_cfg[key] = v
    config = network_config_for(bundle, evidential=args.evidential, **net_cfg)
    seed = pick(args.seed, cfg, "seed", 0)
    val_fraction = pick(args.val_fraction, cfg, "val_fraction", 0.1)
    init = None
    if args.init:
        init, _ = load_checkpoint(args.init, expect=config)
    out = _out_dir(args.out, cfg, f"{bundle.model_id}_net_{seed}")
    weights, report = train_network(bundle, config, seed, val_fraction, init=init)
    save_checkpoint(weights, config, out, report)
    write_table(
        out / "train_report.csv",
        ["epoch", "train_loss", "val_loss"],
        [[e, f"{a:.10g}", f"{b:.10g}"] for e, (a, b) in enumerate(zip(report.train_loss, report.val_loss))],
    )
    print(f"best epoch {report.best_epoch} val {report.best_val:.6g} ({report.stop_reason}); {', '.join(report.flags)}")
    print(out)
    return 0


def cmd_infer(args, cfg) -> int:
    weights, config = load_checkpoint(args.checkpoint)
    if args.data:
        bundle = dataset.load(args.data)
        agents = None
    else:
        if not args.model:
            raise UsageError("--csv needs --model")
        cols = json.loads(Path(args.columns).read_text()) if args.columns else None
        seqs = dataset.ingest_csv(args.csv, args.model, cols)
        agents = list(seqs)
        bundle = dataset.bundle_from_sequences(args.model, list(seqs.values()))
        spec = bundle.extra["schema"]
        bundle.continuous_names = tuple(spec["continuous"])
    if bundle.input_dim != config.input_dim:
        raise DatasetError(f"data encoded with {bundle.input_dim} inputs, network expects {config.input_dim}")
    table = network_predictions(weights, config, bundle)
    if agents is not None:
        table.agents = agents
    out = Path(args.out) if args.out else output_root() / "predictions.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_predictions(table, out)
    print(out)
    return 0


def cmd_baseline(args, cfg) -> int:
    bundle = dataset.load(args.data)
    bcfg = cfg.get("baseline", {})
    method = pick(args.method, bcfg, "method")
    if method is None:
        supported = BASELINES[bundle.model_id]
        method = supported[0]
    prior = None
    if method == "map":
        prior = PriorSpec.from_dict(json.loads(Path(args.prior).read_text())) if args.prior else bundle.prior
        if prior is None:
            raise UsageError("MAP needs a prior (--prior or a bundle with one)")
    table, header, rows = run_baseline(
        bundle,
        method,
        pick(args.seed, cfg, "seed", 0),
        known_params=args.known_params or bcfg.get("known_params", False),
        n_restarts=pick(args.restarts, bcfg, "restarts", 10),
        n_particles=pick(args.particles, bcfg, "particles", 1000),
        n_states=pick(args.states, bcfg, "states"),
        prior=prior,
    )
    out = _out_dir(args.out, cfg, f"{bundle.model_id}_{method}")
    out.mkdir(parents=True, exist_ok=True)
    write_predictions(table, out / "predictions.csv")
    write_table(out / "fit.csv", header, rows)
    print(out)
    return 0


def cmd_evaluate(args, cfg) -> int:
    truth = dataset.load(args.truth)
    report = evaluate_table(read_predictions(args.pred), truth)
    out = Path(args.out) if args.out else output_root() / "evaluation.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    report.write_csv(out)
    for col, (mean, two_sd) in report.aggregate().items():
        print(f"{col}: {mean:.6g} (2sd {two_sd:.6g})")
    print(out)
    return 0


def cmd_bench(args, cfg) -> int:
    seed = pick(args.seed, cfg, "seed", 0)
    out = _out_dir(args.out, cfg, f"bench_{args.suite}_{args.scale}_{seed}")
    path = run_suite(args.suite, args.scale, seed, out)
    print(path)
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="latentseq", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON experiment config; flags override it")
    p.add_argument("--threads", type=int, default=None, help="BLAS thread count (1 = reproducible mode)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a dataset bundle")
    s.add_argument("--model", choices=MODEL_IDS)
    s.add_argument("--agents", type=int)
    s.add_argument("--trials", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--prior", help="JSON prior spec")
    s.add_argument("--out")
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="train a network on a bundle")
    t.add_argument("--data", required=True)
    t.add_argument("--out")
    t.add_argument("--seed", type=int)
    t.add_argument("--val-fraction", type=float)
    t.add_argument("--units", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--max-epochs", type=int)
    t.add_argument("--patience", type=int)
    t.add_argument("--lr-decay-patience", type=int, help="halve the learning rate after this many stale epochs")
    t.add_argument("--dropout-rnn", type=float)
    t.add_argument("--dropout-mlp1", type=float)
    t.add_argument("--dropout-mlp2", type=float)
    t.add_argument("--evidential", action="store_true", help="evidential head for the continuous channels")
    t.add_argument("--init", help="checkpoint to resume from")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="predict latents with a trained network")
    i.add_argument("--checkpoint", required=True)
    src = i.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="dataset bundle directory")
    src.add_argument("--csv", help="per-trial CSV of observed behaviour")
    i.add_argument("--model", choices=MODEL_IDS, help="model encoding for --csv")
    i.add_argument("--columns", help="JSON column map for --csv")
    i.add_argument("--out")
    i.set_defaults(func=cmd_infer)

    b = sub.add_parser("baseline", help="likelihood-based estimates for a bundle")
    b.add_argument("--data", required=True)
    b.add_argument("--method", choices=("mle", "map", "pf", "em"))
    b.add_argument("--known-params", action="store_true", help="filters use the bundle's generating parameters")
    b.add_argument("--restarts", type=int)
    b.add_argument("--particles", type=int)
    b.add_argument("--states", type=int)
    b.add_argument("--prior", help="JSON prior spec for MAP")
    b.add_argument("--seed", type=int)
    b.add_argument("--out")
    b.set_defaults(func=cmd_baseline)

    e = sub.add_parser("evaluate", help="score predictions against a simulated bundle")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("bench", help="run a benchmark suite end to end")
    r.add_argument("suite", choices=SUITES)
    r.add_argument("--scale", choices=tuple(SCALES), default="desk")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
        if args.threads is not None:
            if args.threads < 1:
                raise UsageError("--threads must be >= 1")
            with threadpool_limits(limits=args.threads):
                return args.func(args, cfg)
        return args.func(args, cfg)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, ModelError, NetworkError, FileExistsError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, EMError, FilterError, FitError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        # remaining argument-value errors raised below the parser
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
