"""Benchmark suites: simulate, train, run baselines, evaluate, summarise.

Every CSV a suite writes depends only on the seed and scale; timings go to
a separate ``timing.json`` so reruns can be compared byte for byte.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .. import dataset
from ..dataset import DatasetBundle, default_prior
from ..numcore import Rng
from ..priors import Dist, GlmHmmPrior, PriorSpec
from .pipeline import network_config_for, network_predictions, run_baseline, train_network, write_table
from .predictions import PredictionTable, evaluate_table, write_predictions

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Scale:
    n_train: int
    n_test: int
    n_trials: int
    units: int
    learning_rate: float
    max_epochs: int
    patience: int
    batch_size: int = 128
    n_particles: int = 1000
    n_restarts: int = 10
    em_restarts: int = 5
    val_fraction: float = 0.1
    # (rnn, mlp1, mlp2); None keeps the network defaults
    dropout: tuple[float, float, float] | None = None
    lr_decay_patience: int = 0

    def network_settings(self) -> dict:
        """NetworkConfig overrides for nets trained at this scale."""
        out = dict(
            gru_units=self.units,
            learning_rate=self.learning_rate,
            max_epochs=self.max_epochs,
            patience=self.patience,
            batch_size=self.batch_size,
            lr_decay_patience=self.lr_decay_patience,
        )
        if self.dropout is not None:
            out.update(zip(("dropout_rnn", "dropout_mlp1", "dropout_mlp2"), self.dropout))
        return out


SCALES = {
    # small batches, no dropout and plateau decay: the network underfits at this
    # budget, so regularisation only slows it down
    "desk": Scale(2000, 200, 300, 64, 2e-3, 60, 10, batch_size=32, dropout=(0.0, 0.0, 0.0), lr_decay_patience=3),
    "paper": Scale(9000, 1000, 720, 128, 3e-4, 600, 35),
    # tiny end-to-end run for pipeline tests
    "smoke": Scale(24, 6, 20, 6, 1e-2, 2, 2, batch_size=8, n_particles=50, n_restarts=2, em_restarts=1),
}

SUITES = ("tractable", "intractable", "prior-misspec", "model-misspec", "trial-length")

BETA_PRIORS = {
    "beta55": Dist.beta(5, 5, 0, 10),
    "uniform": Dist.uniform(0, 10),
    "beta25": Dist.beta(2, 5, 0, 10),
    "beta52": Dist.beta(5, 2, 0, 10),
}


def prior_with_beta(beta: Dist) -> PriorSpec:
    p = default_prior("4prl")
    return PriorSpec("4prl", {**p.params, "beta": beta})


class Bench:
    def __init__(self, out: Path, scale: str, seed: int):
        if scale not in SCALES:
            raise ValueError(f"unknown scale {scale!r}; choose from {', '.join(SCALES)}")
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.scale_name = scale
        self.s = SCALES[scale]
        self.rng = Rng(seed)
        self.summary: list[list] = []
        self.timing: dict[str, float] = {}

    # -- helpers
    def seed(self, *key: int) -> int:
        return self.rng.derive_seed(*key)

    def data(self, model_id, n, key, prior=None, n_trials=None) -> DatasetBundle:
        return dataset.generate(model_id, prior, n, n_trials or self.s.n_trials, self.seed(*key))

    def net(self, tag, train_set, key, evidential=False):
        cfg = network_config_for(train_set, evidential=evidential, **self.s.network_settings())
        t0 = time.perf_counter()
        weights, report = train_network(train_set, cfg, self.seed(*key), self.s.val_fraction)
        self.timing[f"train_{tag}"] = time.perf_counter() - t0
        write_table(
            self.out / f"{tag}_train.csv",
            ["epoch", "train_loss", "val_loss"],
            [[e, f"{a:.10g}", f"{b:.10g}"] for e, (a, b) in enumerate(zip(report.train_loss, report.val_loss))],
        )
        log.info("%s: best epoch %d (%s)", tag, report.best_epoch, report.stop_reason)
        return weights, cfg, report

    def score(self, tag, table: PredictionTable, truth: DatasetBundle, suite: str, model: str, method: str, note=""):
        write_predictions(table, self.out / f"{tag}_pred.csv")
        report = evaluate_table(table, truth)
        report.write_csv(self.out / f"{tag}_eval.csv")
        for col, (mean, two_sd) in report.aggregate().items():
            self.summary.append([suite, model, method, note, col, f"{mean:.10g}", f"{two_sd:.10g}"])
        return report

    def baseline(self, tag, bundle, method, key, **kw):
        t0 = time.perf_counter()
        table, header, rows = run_baseline(
            bundle,
            method,
            self.seed(*key),
            known_params=True,
            n_restarts=self.s.n_restarts,
            n_particles=self.s.n_particles,
            em_restarts=self.s.em_restarts,
            **kw,
        )
        self.timing[f"baseline_{tag}"] = time.perf_counter() - t0
        write_table(self.out / f"{tag}_fit.csv", header, rows)
        return table

    def finish(self) -> Path:
        path = write_table(
            self.out / "summary.csv", ["suite", "model", "method", "condition", "metric", "mean", "two_sd"], self.summary
        )
        (self.out / "timing.json").write_text(json.dumps(self.timing, indent=2, sort_keys=True))
        return path

    # -- suites
    def tractable(self):
        for m, model in enumerate(("4prl", "metarl")):
            train_set = self.data(model, self.s.n_train, (1, m, 0))
            test = self.data(model, self.s.n_test, (1, m, 1))
            w, cfg, _ = self.net(f"tractable_{model}_lasenet", train_set, (1, m, 2))
            self.score(f"tractable_{model}_lasenet", network_predictions(w, cfg, test), test, "tractable", model, "lasenet")
            table = self.baseline(f"tractable_{model}_mle", test, "mle", (1, m, 3))
            self.score(f"tractable_{model}_mle", table, test, "tractable", model, "mle")

    def intractable(self):
        for m, (model, method) in enumerate((("hrl", "pf"), ("weber", "pf"), ("glmhmm", "em"))):
            train_set = self.data(model, self.s.n_train, (2, m, 0))
            test = self.data(model, self.s.n_test, (2, m, 1))
            w, cfg, _ = self.net(f"intractable_{model}_lasenet", train_set, (2, m, 2))
            self.score(
                f"intractable_{model}_lasenet", network_predictions(w, cfg, test), test, "intractable", model, "lasenet"
            )
            table = self.baseline(f"intractable_{model}_{method}", test, method, (2, m, 3))
            self.score(f"intractable_{model}_{method}", table, test, "intractable", model, method)

    def prior_misspec(self):
        tests = self.prior_4prl_tests()
        self.prior_4prl_nets(tests)
        self.prior_4prl_map(tests)
        self.prior_glmhmm()

    def prior_4prl_tests(self) -> dict[str, DatasetBundle]:
        return {
            name: self.data("4prl", self.s.n_test, (3, 1, j), prior_with_beta(d))
            for j, (name, d) in enumerate(BETA_PRIORS.items())
        }

    def prior_4prl_nets(self, tests):
        for k, train_name in enumerate(("uniform", "beta55")):
            train_set = self.data("4prl", self.s.n_train, (3, 0, k), prior_with_beta(BETA_PRIORS[train_name]))
            w, cfg, _ = self.net(f"prior_4prl_train-{train_name}", train_set, (3, 2, k))
            for test_name, test in tests.items():
                self.score(
                    f"prior_4prl_train-{train_name}_test-{test_name}",
                    network_predictions(w, cfg, test),
                    test,
                    "prior-misspec",
                    "4prl",
                    f"lasenet-{train_name}",
                    f"test-{test_name}",
                )

    def prior_4prl_map(self, tests):
        for test_name, test in tests.items():
            table = self.baseline(
                f"prior_4prl_map_test-{test_name}", test, "map", (3, 3), prior=prior_with_beta(BETA_PRIORS["beta55"])
            )
            self.score(f"prior_4prl_map_test-{test_name}", table, test, "prior-misspec", "4prl", "map-beta55", f"test-{test_name}")

    def prior_glmhmm(self):
        """Train/test mismatch in GLM-HMM state-occupancy skewness."""
        skew_tests = {
            g: self.data("glmhmm", self.s.n_test, (3, 5, j), PriorSpec("glmhmm", {}, GlmHmmPrior(skewness=g)))
            for j, g in enumerate((-1, 0, 1))
        }
        for k, g_train in enumerate((0, 1)):
            train_set = self.data("glmhmm", self.s.n_train, (3, 4, k), PriorSpec("glmhmm", {}, GlmHmmPrior(skewness=g_train)))
            w, cfg, _ = self.net(f"prior_glmhmm_train-skew{g_train}", train_set, (3, 6, k))
            for g, test in skew_tests.items():
                self.score(
                    f"prior_glmhmm_train-skew{g_train}_test-skew{g}",
                    network_predictions(w, cfg, test),
                    test,
                    "prior-misspec",
                    "glmhmm",
                    f"lasenet-skew{g_train}",
                    f"test-skew{g}",
                )
        for g, test in skew_tests.items():
            table = self.baseline(f"prior_glmhmm_em_test-skew{g}", test, "em", (3, 7))
            self.score(f"prior_glmhmm_em_test-skew{g}", table, test, "prior-misspec", "glmhmm", "em", f"test-skew{g}")

    def model_misspec(self):
        priors = {K: PriorSpec("glmhmm", {}, GlmHmmPrior(n_states=K)) for K in (3, 4)}
        tests = {K: self.data("glmhmm", self.s.n_test, (4, 1, K), priors[K]) for K in (3, 4)}
        for K_train in (3, 4):
            train_set = self.data("glmhmm", self.s.n_train, (4, 0, K_train), priors[K_train])
            w, cfg, _ = self.net(f"model_glmhmm_train-k{K_train}", train_set, (4, 2, K_train))
            for K_test, test in tests.items():
                table = _pad_classes(network_predictions(w, cfg, test), 4)
                self.score(
                    f"model_glmhmm_train-k{K_train}_test-k{K_test}",
                    table,
                    _with_classes(test, 4),
                    "model-misspec",
                    "glmhmm",
                    f"lasenet-k{K_train}",
                    f"test-k{K_test}",
                )
            for K_test, test in tests.items():
                table = _pad_classes(self.baseline(f"model_glmhmm_em-k{K_train}_test-k{K_test}", test, "em", (4, 3), n_states=K_train), 4)
                self.score(
                    f"model_glmhmm_em-k{K_train}_test-k{K_test}",
                    table,
                    _with_classes(test, 4),
                    "model-misspec",
                    "glmhmm",
                    f"em-k{K_train}",
                    f"test-k{K_test}",
                )

    def trial_length(self):
        lengths = (100, 300, 500, 720) if self.scale_name != "smoke" else (10, 20)
        tests = {L: self.data("4prl", self.s.n_test, (5, 1, L), n_trials=L) for L in lengths}
        for L_train in (lengths[1], lengths[-1]):
            train_set = self.data("4prl", self.s.n_train, (5, 0, L_train), n_trials=L_train)
            w, cfg, _ = self.net(f"length_4prl_train-{L_train}", train_set, (5, 2, L_train))
            for L, test in tests.items():
                self.score(
                    f"length_4prl_train-{L_train}_test-{L}",
                    network_predictions(w, cfg, test),
                    test,
                    "trial-length",
                    "4prl",
                    f"lasenet-{L_train}",
                    f"test-{L}",
                )


def _pad_classes(table: PredictionTable, K: int) -> PredictionTable:
    if table.probs is None or table.probs.shape[-1] >= K:
        return table
    pad = np.zeros(table.probs.shape[:-1] + (K - table.probs.shape[-1],))
    return replace(table, probs=np.concatenate([table.probs, pad], axis=-1))


def _with_classes(bundle: DatasetBundle, K: int) -> DatasetBundle:
    return replace(bundle, n_classes=K)


def run_suite(suite: str, scale: str, seed: int, out) -> Path:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; valid suites: {', '.join(SUITES)}")
    bench = Bench(Path(out), scale, seed)
    getattr(bench, suite.replace("-", "_"))()
    return bench.finish()


__all__ = ["BETA_PRIORS", "SCALES", "SUITES", "Bench", "run_suite"]
