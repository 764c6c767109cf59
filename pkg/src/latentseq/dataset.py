"""Simulated (Y, Z, theta) datasets: generation, on-disk format, splits and CSV ingest.

A bundle is a directory holding ``manifest.json`` plus one binary payload per
array.  Each payload starts with the magic ``LASE``, a little-endian u32
format version, a u32 rank and the u32 dimensions, followed by the raw
little-endian data.  The element type of every array is recorded in the
manifest.
"""
from __future__ import annotations

import csv
import json
import logging
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import cogmodels as cm
from .cogmodels import ModelError, ModelParams, TrialSequence, pack_glmhmm
from .numcore import Rng
from .priors import Dist, GlmHmmPrior, PriorSpec

log = logging.getLogger(__name__)

MAGIC = b"LASE"
FORMAT_VERSION = 1
_DTYPES = {"f32": np.dtype("<f4"), "i32": np.dtype("<i4"), "f64": np.dtype("<f8")}


class DatasetError(Exception):
    """Base class for dataset problems."""

    code = 3


class MagicError(DatasetError):
    pass


class VersionError(DatasetError):
    pass


class TruncationError(DatasetError):
    pass


class DimensionError(DatasetError):
    pass


class IngestError(DatasetError):
    pass


def default_prior(model_id: str) -> PriorSpec:
    cm.check_model_id(model_id)
    u = Dist.uniform
    if model_id == "4prl":
        params = {"alpha_pos": u(0, 1), "alpha_neg": u(0, 1), "beta": u(0, 10), "kappa": u(0, 1)}
    elif model_id == "metarl":
        params = {n: u(0, 1) for n in cm.SPECS["metarl"].param_names}
        params["beta"] = u(0, 20)
    elif model_id == "hrl":
        params = {"alpha": u(0.4, 0.7), "beta": u(1, 10)}
    elif model_id == "weber":
        params = {"mu": Dist.normal(0.05, 0.003), "lam": Dist.normal(1.22, 0.06), "beta": Dist.normal(5, 0.023)}
    else:
        return PriorSpec("glmhmm", {}, GlmHmmPrior())
    return PriorSpec(model_id, params)


def sample_params(prior: PriorSpec, rng: Rng) -> ModelParams:
    if prior.model_id == "glmhmm":
        if prior.glm is None:
            raise ModelError("GLM-HMM prior needs a transition/weight family")
        A, W = prior.glm.sample(rng)
        return ModelParams("glmhmm", pack_glmhmm(A, W))
    spec = cm.SPECS[prior.model_id]
    missing = set(spec.param_names) - set(prior.params)
    extra = set(prior.params) - set(spec.param_names)
    if missing or extra:
        raise ModelError(f"prior does not match {prior.model_id}: missing {sorted(missing)}, extra {sorted(extra)}")
    theta = []
    for name, (lo, hi) in zip(spec.param_names, spec.bounds):
        # normal priors can stray past the box; clamp rather than redraw
        theta.append(min(hi, max(lo, prior.params[name].sample(rng))))
    return ModelParams(prior.model_id, theta)


@dataclass
class DatasetBundle:
    """Padded per-agent arrays plus manifest metadata.

    ``Y`` is (N, T, input_dim) float32, ``Zc`` (N, T, C) float32, ``Zd``
    (N, T) int32 (absent when the model has no discrete latent), ``theta``
    (N, P) float64 and ``lengths`` (N,) int32.
    """

    model_id: str
    Y: np.ndarray
    Zc: np.ndarray
    Zd: np.ndarray | None
    theta: np.ndarray
    lengths: np.ndarray
    continuous_names: tuple[str, ...]
    n_classes: int
    prior: PriorSpec | None = None
    seed: int | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        n = self.Y.shape[0]
        if self.Y.ndim != 3 or self.Y.shape[2] != cm.INPUT_DIMS[self.model_id]:
            raise DimensionError(
                f"{self.model_id} input must be (N, T, {cm.INPUT_DIMS[self.model_id]}), got {self.Y.shape}"
            )
        if self.Zc.shape[:2] != self.Y.shape[:2] or self.Zc.shape[2] != len(self.continuous_names):
            raise DimensionError("continuous latents do not match inputs")
        if self.Zd is not None and self.Zd.shape != self.Y.shape[:2]:
            raise DimensionError("discrete latents do not match inputs")
        if self.theta.shape[0] != n or self.lengths.shape != (n,):
            raise DimensionError("theta/lengths do not match agent count")

    @property
    def n_agents(self) -> int:
        return int(self.Y.shape[0])

    @property
    def n_trials(self) -> int:
        return int(self.Y.shape[1])

    @property
    def input_dim(self) -> int:
        return int(self.Y.shape[2])

    def mask(self) -> np.ndarray:
        return np.arange(self.n_trials)[None, :] < self.lengths[:, None]

    def subset(self, idx) -> "DatasetBundle":
        idx = np.asarray(idx, dtype=np.int64)
        return DatasetBundle(
            self.model_id,
            self.Y[idx],
            self.Zc[idx],
            None if self.Zd is None else self.Zd[idx],
            self.theta[idx],
            self.lengths[idx],
            self.continuous_names,
            self.n_classes,
            self.prior,
            self.seed,
            dict(self.extra),
        )

    def sequence(self, i: int) -> TrialSequence:
        """Decode agent ``i`` back into a :class:`TrialSequence`."""
        return decode(self.model_id, self.Y[i, : self.lengths[i]].astype(float))

    def params(self, i: int) -> ModelParams:
        return ModelParams(self.model_id, self.theta[i])

    def manifest(self) -> dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "model_id": self.model_id,
            "n_agents": self.n_agents,
            "n_trials": self.n_trials,
            "input_dim": self.input_dim,
            "latent": {"continuous": list(self.continuous_names), "n_classes": self.n_classes},
            "prior": None if self.prior is None else self.prior.to_dict(),
            "seed": self.seed,
            "extra": self.extra,
        }


def decode(model_id: str, Y: np.ndarray) -> TrialSequence:
    """Inverse of :func:`cogmodels.encode`."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != cm.INPUT_DIMS[model_id]:
        raise DimensionError(f"cannot decode shape {Y.shape} as {model_id}")
    rewards = Y[:, 1]
    if model_id == "weber":
        actions = np.argmax(Y[:, 5:9], axis=1)
        stimuli = Y[:, 2:5]
    else:
        actions = (Y[:, 0] > 0).astype(np.int64)
        stimuli = Y[:, 2:]
    return TrialSequence(model_id, actions, rewards, stimuli)


def generate(
    model_id: str,
    prior: PriorSpec | None,
    n_agents: int,
    n_trials: int,
    seed: int,
    env=None,
) -> DatasetBundle:
    """Sample theta_i from the prior and simulate agent i on sub-stream (seed, i)."""
    cm.check_model_id(model_id)
    if n_agents < 1:
        raise ValueError("n_agents must be >= 1")
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    prior = prior or default_prior(model_id)
    if prior.model_id != model_id:
        raise ModelError(f"prior is for {prior.model_id}, not {model_id}")
    root = Rng(seed)
    Ys, Zcs, Zds, thetas = [], [], [], []
    n_classes = None
    names: tuple[str, ...] = ()
    for i in range(n_agents):
        params = sample_params(prior, root.substream(i, 0))
        seq, lat = cm.simulate(params, n_trials, root.substream(i, 1), env)
        Ys.append(seq.encode())
        Zcs.append(lat.continuous)
        Zds.append(lat.discrete)
        thetas.append(params.theta)
        n_classes, names = lat.n_classes, lat.continuous_names
    Zd = None if not n_classes else np.stack(Zds).astype(np.int32)
    return DatasetBundle(
        model_id,
        np.stack(Ys).astype(np.float32),
        np.stack(Zcs).astype(np.float32),
        Zd,
        np.stack(thetas).astype(np.float64),
        np.full(n_agents, n_trials, dtype=np.int32),
        names,
        int(n_classes),
        prior,
        seed,
    )


# ---------------------------------------------------------------- binary container


def write_array(path: Path, arr: np.ndarray, dtype: str) -> None:
    data = np.ascontiguousarray(arr, dtype=_DTYPES[dtype])
    header = MAGIC + struct.pack("<II", FORMAT_VERSION, data.ndim) + struct.pack(f"<{data.ndim}I", *data.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def read_array(path: Path, dtype: str) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise TruncationError(f"{path}: header truncated")
    if raw[:4] != MAGIC:
        raise MagicError(f"{path}: bad magic {raw[:4]!r}")
    version, ndim = struct.unpack("<II", raw[4:12])
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: unsupported format version {version}")
    if ndim > 8:
        raise DimensionError(f"{path}: implausible rank {ndim}")
    end = 12 + 4 * ndim
    if len(raw) < end:
        raise TruncationError(f"{path}: dimension block truncated")
    shape = struct.unpack(f"<{ndim}I", raw[12:end])
    dt = _DTYPES[dtype]
    expected = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
    body = raw[end:]
    if len(body) < expected:
        raise TruncationError(f"{path}: payload truncated ({len(body)} of {expected} bytes)")
    if len(body) > expected:
        raise DimensionError(f"{path}: payload longer than declared dimensions")
    return np.frombuffer(body, dtype=dt).reshape(shape).copy()


_ARRAYS = (("Y", "f32"), ("Zc", "f32"), ("Zd", "i32"), ("theta", "f64"), ("lengths", "i32"))


def save(bundle: DatasetBundle, path, force: bool = False) -> Path:
    path = Path(path)
    if path.exists() and any(path.iterdir()) and not force:
        raise FileExistsError(f"{path} exists; pass force to overwrite")
    path.mkdir(parents=True, exist_ok=True)
    manifest = bundle.manifest()
    manifest["arrays"] = {}
    for name, dtype in _ARRAYS:
        arr = getattr(bundle, name)
        if arr is None:
            continue
        write_array(path / f"{name}.bin", arr, dtype)
        manifest["arrays"][name] = {"file": f"{name}.bin", "dtype": dtype}
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load(path) -> DatasetBundle:
    path = Path(path)
    mpath = path / "manifest.json"
    if not mpath.exists():
        raise DatasetError(f"{path}: no manifest.json")
    manifest = json.loads(mpath.read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise VersionError(f"{path}: manifest version {manifest.get('format_version')}")
    arrays = {}
    for name, info in manifest["arrays"].items():
        arrays[name] = read_array(path / info["file"], info["dtype"])
    model_id = manifest["model_id"]
    bundle = DatasetBundle(
        model_id,
        arrays["Y"],
        arrays["Zc"],
        arrays.get("Zd"),
        arrays["theta"],
        arrays["lengths"],
        tuple(manifest["latent"]["continuous"]),
        int(manifest["latent"]["n_classes"]),
        None if manifest.get("prior") is None else PriorSpec.from_dict(manifest["prior"]),
        manifest.get("seed"),
        manifest.get("extra") or {},
    )
    if bundle.n_agents != manifest["n_agents"] or bundle.n_trials != manifest["n_trials"]:
        raise DimensionError(f"{path}: payload shape disagrees with manifest")
    return bundle


def split(bundle: DatasetBundle, val_fraction: float, seed: int):
    """Agent-disjoint (train, val) partition from a seeded permutation."""
    if not 0 < val_fraction < 1:
        raise ValueError("val_fraction must lie in (0, 1)")
    n = bundle.n_agents
    if n == 1:
        warnings.warn("single-agent bundle: no validation split", stacklevel=2)
        return bundle, None
    n_val = int(round(n * val_fraction))
    if n_val == 0 or n_val == n:
        raise ValueError(f"val_fraction {val_fraction} leaves an empty split for {n} agents")
    perm = Rng(seed).permutation(n)
    return bundle.subset(np.sort(perm[n_val:])), bundle.subset(np.sort(perm[:n_val]))


# ---------------------------------------------------------------- CSV


def default_columns(model_id: str) -> dict[str, Any]:
    cols: dict[str, Any] = {"session": "session", "action": "action", "reward": "reward"}
    if model_id == "hrl":
        cols["stimulus"] = ["dir0", "dir1", "dir2"]
    elif model_id in ("weber", "glmhmm"):
        cols["stimulus"] = ["stimulus"]
    return cols


def ingest_csv(path, model_id: str, column_map: dict | None = None) -> dict[str, TrialSequence]:
    """Read per-trial rows into one :class:`TrialSequence` per session.

    Rows keep file order within a session.  Actions for two-action models may
    be coded 0/1 or -1/+1; Weber actions are 0..3 and its stimulus column holds
    the stimulus index 0..2.
    """
    cm.check_model_id(model_id)
    cols = default_columns(model_id)
    cols.update(column_map or {})
    stim_cols = cols.get("stimulus", [])
    if isinstance(stim_cols, str):
        stim_cols = [stim_cols]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise IngestError(f"{path}: empty file")
        needed = [cols["session"], cols["action"], cols["reward"], *stim_cols]
        missing = [c for c in needed if c not in reader.fieldnames]
        if missing:
            raise IngestError(f"{path}: missing columns {missing}")
        sessions: dict[str, list] = {}
        n_actions = cm.types.N_ACTIONS[model_id]
        for lineno, row in enumerate(reader, start=2):
            try:
                a = int(float(row[cols["action"]]))
                r = float(row[cols["reward"]])
                s = [float(row[c]) for c in stim_cols]
            except (TypeError, ValueError) as exc:
                raise IngestError(f"{path}:{lineno}: unparsable value ({exc})") from None
            if n_actions == 2 and a == -1:
                a = 0
            if not 0 <= a < n_actions:
                raise IngestError(f"{path}:{lineno}: unknown action code {row[cols['action']]!r}")
            if r not in (0.0, 1.0):
                raise IngestError(f"{path}:{lineno}: reward must be 0 or 1, got {row[cols['reward']]!r}")
            if model_id == "weber":
                k = int(s[0])
                if s[0] != k or not 0 <= k < 3:
                    raise IngestError(f"{path}:{lineno}: weber stimulus must be 0, 1 or 2")
                s = list(np.eye(3)[k])
            sessions.setdefault(row[cols["session"]], []).append((a, r, s))
    if not sessions:
        raise IngestError(f"{path}: no data rows")
    out = {}
    for sid, rows in sessions.items():
        a, r, s = zip(*rows)
        out[sid] = TrialSequence(model_id, np.array(a), np.array(r), np.array(s, dtype=float).reshape(len(a), -1))
    return out


def export_csv(bundle: DatasetBundle, path) -> Path:
    """Write the observable part of a bundle in the format ``ingest_csv`` reads."""
    path = Path(path)
    cols = default_columns(bundle.model_id)
    stim_cols = cols.get("stimulus", [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["session", "trial", "action", "reward", *stim_cols])
        for i in range(bundle.n_agents):
            seq = bundle.sequence(i)
            for t in range(seq.n_trials):
                if bundle.model_id == "weber":
                    stim = [int(np.argmax(seq.stimuli[t]))]
                else:
                    stim = [repr(float(x)) for x in seq.stimuli[t]]
                w.writerow([i, t, int(seq.actions[t]), int(seq.rewards[t]), *stim])
    return path


def bundle_from_sequences(model_id: str, seqs: list[TrialSequence]) -> DatasetBundle:
    """Pad encoded sequences into a latent-free bundle (for inference on real data)."""
    if not seqs:
        raise IngestError("no sequences")
    T = max(s.n_trials for s in seqs)
    D = cm.INPUT_DIMS[model_id]
    Y = np.zeros((len(seqs), T, D), dtype=np.float32)
    for i, s in enumerate(seqs):
        Y[i, : s.n_trials] = s.encode()
    spec = cm.SPECS[model_id]
    return DatasetBundle(
        model_id,
        Y,
        np.zeros((len(seqs), T, 0), dtype=np.float32),
        None,
        np.zeros((len(seqs), 0)),
        np.array([s.n_trials for s in seqs], dtype=np.int32),
        (),
        0,
        extra={"schema": {"continuous": list(spec.continuous_names), "n_classes": spec.n_classes}},
    )
