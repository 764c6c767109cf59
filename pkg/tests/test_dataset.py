import hashlib
import math
import warnings

import numpy as np
import pytest

from latentseq import dataset
from latentseq.cogmodels import MODEL_IDS
from latentseq.dataset import DatasetBundle, DatasetError, IngestError, MagicError, TruncationError, VersionError
from latentseq.numcore import Rng
from latentseq.priors import Dist, GlmHmmPrior, PriorSpec


def _digest(path):
    h = hashlib.sha256()
    for f in sorted(path.iterdir()):
        h.update(f.name.encode())
        h.update(f.read_bytes())
    return h.hexdigest()


def _blank(n):
    return DatasetBundle(
        "4prl",
        np.zeros((n, 1, 2), np.float32),
        np.zeros((n, 1, 1), np.float32),
        None,
        np.zeros((n, 4)),
        np.ones(n, np.int32),
        ("q_chosen",),
        0,
    )


@pytest.mark.parametrize("model", MODEL_IDS)
def test_round_trip(tmp_path, model):
    b = dataset.generate(model, None, 3, 12, seed=1)
    dataset.save(b, tmp_path / model)
    c = dataset.load(tmp_path / model)
    for name in ("Y", "Zc", "theta", "lengths"):
        assert np.array_equal(getattr(b, name), getattr(c, name))
    if b.Zd is None:
        assert c.Zd is None
    else:
        assert np.array_equal(b.Zd, c.Zd)
    assert c.prior.to_dict() == b.prior.to_dict()
    assert (c.n_classes, c.continuous_names) == (b.n_classes, b.continuous_names)
    for i in range(3):
        assert np.array_equal(c.sequence(i).encode().astype(np.float32), b.Y[i])


def test_same_seed_gives_identical_files(tmp_path):
    for d in ("a", "b"):
        dataset.save(dataset.generate("hrl", None, 4, 30, seed=9), tmp_path / d)
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")
    dataset.save(dataset.generate("hrl", None, 4, 30, seed=10), tmp_path / "c")
    assert _digest(tmp_path / "a") != _digest(tmp_path / "c")


def test_agent_streams_do_not_depend_on_bundle_size():
    small = dataset.generate("4prl", None, 2, 20, seed=3)
    big = dataset.generate("4prl", None, 5, 20, seed=3)
    assert np.array_equal(small.Y, big.Y[:2])


def test_save_refuses_to_overwrite(tmp_path):
    b = dataset.generate("4prl", None, 2, 5, seed=0)
    dataset.save(b, tmp_path / "x")
    with pytest.raises(FileExistsError):
        dataset.save(b, tmp_path / "x")
    dataset.save(b, tmp_path / "x", force=True)


def test_corrupted_payloads(tmp_path):
    arr = np.arange(6.0).reshape(2, 3)
    p = tmp_path / "a.bin"
    dataset.write_array(p, arr, "f64")
    raw = bytearray(p.read_bytes())
    bad = bytearray(raw)
    bad[4] = 7
    p.write_bytes(bytes(bad))
    with pytest.raises(VersionError):
        dataset.read_array(p, "f64")
    bad = bytearray(raw)
    bad[0] = ord("X")
    p.write_bytes(bytes(bad))
    with pytest.raises(MagicError):
        dataset.read_array(p, "f64")
    p.write_bytes(bytes(raw[:-3]))
    with pytest.raises(TruncationError):
        dataset.read_array(p, "f64")
    p.write_bytes(bytes(raw[:6]))
    with pytest.raises(TruncationError):
        dataset.read_array(p, "f64")


def test_f32_quantisation_bound(tmp_path):
    x = Rng(0).normal(0, 3, size=1000)
    dataset.write_array(tmp_path / "x.bin", x, "f32")
    y = dataset.read_array(tmp_path / "x.bin", "f32").astype(float)
    assert np.all(np.abs(y - x) <= np.abs(x) * 2.0**-24)


def test_split_sizes_and_partition():
    tr, va = dataset.split(_blank(9000), 0.10, seed=0)
    assert (tr.n_agents, va.n_agents) == (8100, 900)
    b = dataset.generate("4prl", None, 10, 4, seed=2)
    tr, va = dataset.split(b, 0.10, seed=1)
    assert (tr.n_agents, va.n_agents) == (9, 1)
    rows = {bytes(b.Y[i]) for i in range(10)}
    got = [bytes(tr.Y[i]) for i in range(9)] + [bytes(va.Y[0])]
    assert set(got) == rows and len(got) == 10


def test_single_agent_split_warns():
    b = dataset.generate("4prl", None, 1, 5, seed=0)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        tr, va = dataset.split(b, 0.1, seed=0)
    assert va is None and tr.n_agents == 1 and w


def test_generate_rejects_bad_sizes():
    with pytest.raises(ValueError):
        dataset.generate("4prl", None, 0, 5, seed=0)
    with pytest.raises(ValueError):
        dataset.generate("4prl", None, 2, 0, seed=0)


def test_custom_priors_are_used():
    prior = PriorSpec("4prl", {**dataset.default_prior("4prl").params, "beta": Dist.uniform(0, 0.5)})
    b = dataset.generate("4prl", prior, 20, 3, seed=0)
    assert b.theta[:, 2].max() <= 0.5
    g = dataset.generate("glmhmm", PriorSpec("glmhmm", {}, GlmHmmPrior(n_states=4)), 2, 10, seed=0)
    assert g.n_classes == 4


def test_prior_densities():
    assert Dist.uniform(0, 10).logpdf(3) == pytest.approx(-math.log(10))
    assert Dist.uniform(0, 10).logpdf(11) == -math.inf
    # Beta(2,2) on [0,1] at 0.5 is 1.5
    assert Dist.beta(2, 2).logpdf(0.5) == pytest.approx(math.log(1.5))
    assert Dist.beta(5, 5, 0, 10).logpdf(5) == pytest.approx(Dist.beta(5, 5).logpdf(0.5) - math.log(10))
    assert Dist.normal(1, 2).logpdf(1) == pytest.approx(-math.log(2) - 0.5 * math.log(2 * math.pi))
    spec = PriorSpec("4prl", {"beta": Dist.beta(5, 5, 0, 10)})
    assert PriorSpec.from_dict(spec.to_dict()) == spec


def test_glmhmm_prior_stationary_occupancy():
    from latentseq.cogmodels import stationary_distribution

    for skew in (-1, 0, 1):
        prior = GlmHmmPrior(skewness=skew)
        A, _ = prior.sample(Rng(skew + 5))
        np.testing.assert_allclose(stationary_distribution(A), prior.occupancy(), atol=1e-10)


def test_csv_ingest_two_columns(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("session,action,reward\ns1,1,0\ns1,-1,1\ns2,0,1\n")
    seqs = dataset.ingest_csv(p, "metarl")
    assert list(seqs) == ["s1", "s2"]
    np.testing.assert_array_equal(seqs["s1"].encode(), [[1.0, 0.0], [-1.0, 1.0]])


def test_csv_ingest_errors(tmp_path):
    empty = tmp_path / "e.csv"
    empty.write_text("")
    with pytest.raises(IngestError):
        dataset.ingest_csv(empty, "4prl")
    header_only = tmp_path / "h.csv"
    header_only.write_text("session,action,reward\n")
    with pytest.raises(IngestError):
        dataset.ingest_csv(header_only, "4prl")
    bad = tmp_path / "b.csv"
    bad.write_text("session,action,reward\ns,3,1\n")
    with pytest.raises(IngestError, match=":2"):
        dataset.ingest_csv(bad, "4prl")
    assert issubclass(IngestError, DatasetError)


@pytest.mark.parametrize("model", MODEL_IDS)
def test_csv_round_trip(tmp_path, model):
    b = dataset.generate(model, None, 3, 15, seed=4)
    dataset.export_csv(b, tmp_path / "x.csv")
    seqs = dataset.ingest_csv(tmp_path / "x.csv", model)
    for i, s in enumerate(seqs.values()):
        assert np.array_equal(s.encode().astype(np.float32), b.Y[i])
