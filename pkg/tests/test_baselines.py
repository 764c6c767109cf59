import math

import numpy as np
import pytest

from latentseq import dataset
from latentseq.baselines import (
    EMError,
    FitError,
    fit_glmhmm_em,
    fit_map,
    fit_mle,
    forward_backward,
    metarl_state_posterior,
    particle_filter_hrl,
    particle_filter_weber,
    systematic_resample,
)
from latentseq.baselines.hmm import align_states_to_prototypes
from latentseq.baselines.mle import negative_loglik
from latentseq.cogmodels import ModelError, ModelParams, TrialSequence, metarl_emissions, pack_glmhmm, simulate
from latentseq.metrics import accuracy
from latentseq.numcore import Rng
from latentseq.priors import Dist, PriorSpec
from oracles import (
    grid_argmax,
    hmm_by_enumeration,
    hrl_evidence_by_enumeration,
    hrl_filter_by_enumeration,
    metarl_engaged_by_enumeration,
)


def random_hmm(rng, K, T):
    A = rng.uniform(0.05, 1, size=(K, K))
    A /= A.sum(1, keepdims=True)
    init = rng.uniform(0.05, 1, size=K)
    init /= init.sum()
    return A, np.log(rng.uniform(0.01, 1, size=(T, K))), init


def test_forward_backward_matches_enumeration_with_pairwise_marginals():
    rng = Rng(0)
    for i in range(10):
        A, le, init = random_hmm(rng.substream(i), 3, 6)
        post = forward_backward(A, le, init)
        ll, g, xi = hmm_by_enumeration(A, le, init)
        assert post.loglik == pytest.approx(ll, abs=1e-10)
        np.testing.assert_allclose(post.gammas, g, atol=1e-10, rtol=0)
        np.testing.assert_allclose(post.xis, xi, atol=1e-10, rtol=0)
        assert np.allclose(post.xis.sum(axis=(1, 2)), 1, atol=1e-9)


def test_single_state_and_symmetric_cases():
    le = np.log(Rng(1).uniform(0.1, 1, size=(7, 1)))
    post = forward_backward(np.ones((1, 1)), le, np.ones(1))
    assert np.all(post.gammas == 1.0) and post.loglik == pytest.approx(le.sum(), abs=1e-12)
    post = forward_backward(np.full((3, 3), 1 / 3), np.full((5, 3), math.log(0.4)), np.full(3, 1 / 3))
    np.testing.assert_allclose(post.gammas, 1 / 3, atol=1e-12)


def test_forward_backward_errors():
    with pytest.raises(ModelError):
        forward_backward(np.array([[0.5, 0.6], [0.5, 0.5]]), np.zeros((3, 2)), np.array([0.5, 0.5]))
    with pytest.raises(ModelError):
        forward_backward(np.eye(2), np.full((2, 2), -np.inf), np.array([0.5, 0.5]))


def test_metarl_posterior_absorbing_engaged():
    params = ModelParams("metarl", [0, 0, 5, 0, 0.3, 0.3, 0.2, 0.5, 0.9])
    seq, _ = simulate(params, 50, Rng(0))
    assert np.all(metarl_state_posterior(params, seq) == 1.0)


def test_metarl_posterior_matches_enumeration():
    rng = Rng(2)
    for i in range(5):
        th = [float(x) for x in rng.uniform(0, 1, size=9)]
        th[2] = float(rng.uniform(0, 20))
        params = ModelParams("metarl", th)
        seq, _ = simulate(params, 10, rng.substream(i))
        _, ref = metarl_engaged_by_enumeration(th[0], th[1], metarl_emissions(params, seq)[:, 1])
        np.testing.assert_allclose(metarl_state_posterior(params, seq), ref, atol=1e-10, rtol=0)


def test_metarl_posterior_flags_contradicting_choice():
    params = ModelParams("metarl", [0.1, 0.1, 20.0, 0.0, 0.5, 0.5, 0.0, 0.0, 1.0])
    # after a run of rewarded left choices Q strongly favours left, then the agent goes right
    actions = np.array([0] * 8 + [1] + [0] * 3)
    rewards = np.array([1.0] * 8 + [0.0] + [1.0] * 3)
    seq = TrialSequence("metarl", actions, rewards, np.zeros((12, 0)))
    pe = metarl_state_posterior(params, seq)
    assert pe[8] < 0.5 and pe[6] > 0.5


def _hrl_case(seed, T, beta=None):
    rng = Rng(seed)
    theta = [float(rng.uniform(0.4, 0.7)), float(beta if beta is not None else rng.uniform(1, 10))]
    params = ModelParams("hrl", theta)
    seq, _ = simulate(params, T, rng.substream(1))
    return params, seq


def test_hrl_filter_close_to_enumeration():
    tvs = []
    for s in range(5):
        params, seq = _hrl_case(s, 5)
        ref = hrl_filter_by_enumeration(*params.theta, seq.stimuli, seq.actions, seq.rewards)
        out = particle_filter_hrl(params, seq, n_particles=20_000, seed=s)
        tvs.append(0.5 * np.abs(out.class_probs - ref).sum(axis=1))
    assert np.mean(tvs) < 0.03


def test_hrl_evidence_matches_enumeration_within_monte_carlo_error():
    params, seq = _hrl_case(11, 7)
    exact = hrl_evidence_by_enumeration(*params.theta, seq.stimuli, seq.actions, seq.rewards)
    est = np.array([math.exp(particle_filter_hrl(params, seq, n_particles=10_000, seed=s).log_evidence) for s in range(10)])
    assert abs(est.mean() - exact) <= 3 * est.std(ddof=1) / math.sqrt(est.size) + 1e-12


def test_hrl_filter_is_uniform_without_information():
    params = ModelParams("hrl", [0.5, 0.0])
    T = 20
    dirs = np.ones((T, 3))
    seq = TrialSequence("hrl", np.ones(T, int), Rng(0).bernoulli(0.5, T).astype(float), dirs)
    out = particle_filter_hrl(params, seq, n_particles=20_000, seed=1)
    np.testing.assert_allclose(out.class_probs, 1 / 3, atol=0.02)


def test_resampling_rule_and_weight_normalisation():
    params, seq = _hrl_case(3, 60)
    out = particle_filter_hrl(params, seq, n_particles=500, seed=0)
    np.testing.assert_array_equal(out.resampled, out.ess < 0.5 * 500)
    assert abs(out.final.weights.sum() - 1) < 1e-9
    assert np.all((out.ess >= 1 - 1e-9) & (out.ess <= 500 + 1e-9))
    np.testing.assert_allclose(out.class_probs.sum(1), 1, atol=1e-9)


def test_systematic_resampling_counts():
    w = np.array([0.1, 0.2, 0.7])
    idx = systematic_resample(w, Rng(3))
    counts = np.bincount(idx, minlength=3)
    assert np.all(np.abs(counts - 3 * w) < 1)


def test_weber_filter_without_noise_follows_bayes_path():
    params = ModelParams("weber", [0.0, 0.0, 5.0])
    seq, lat = simulate(params, 80, Rng(4))
    out = particle_filter_weber(params, seq, n_particles=50, seed=0)
    np.testing.assert_array_equal(out.labels, lat.discrete)
    np.testing.assert_allclose(out.class_probs.max(axis=1), 1.0, atol=1e-12)
    assert abs(out.final.weights.sum() - 1) < 1e-9


def test_weber_filter_beats_chance():
    b = dataset.generate("weber", None, 4, 200, seed=5)
    accs = []
    for i in range(4):
        out = particle_filter_weber(b.params(i), b.sequence(i), n_particles=500, seed=i)
        accs.append(accuracy(b.Zd[i], out.labels))
    assert np.mean(accs) > 3 / 24


def _glm_sequences(A, W, n, T, seed):
    p = ModelParams("glmhmm", pack_glmhmm(np.asarray(A, float), np.asarray(W, float)))
    root = Rng(seed)
    return [simulate(p, T, root.substream(i)) for i in range(n)]


def test_em_single_state_recovers_logistic_weights():
    w = np.array([[2.0, -0.5, 0.4, 0.8]])
    data = _glm_sequences([[1.0]], w, 500, 500, seed=1)
    res = fit_glmhmm_em([s for s, _ in data], 1, seed=0, n_restarts=1)
    W = res.params.theta[1:]
    assert np.all(np.abs(W - w[0]) < 0.2), W
    assert np.all(np.diff(res.loglik_history) >= -1e-8)


def test_em_recovers_three_state_structure():
    b = dataset.generate("glmhmm", None, 60, 300, seed=3)
    res = fit_glmhmm_em([b.sequence(i) for i in range(60)], 3, seed=0, n_restarts=2)
    assert np.all(np.diff(res.loglik_history) >= -1e-8)
    W = res.params.theta[9:].reshape(3, 4)
    perm = align_states_to_prototypes(W, ["engaged", "left_biased", "right_biased"])
    engaged, left = W[perm[0]], W[perm[1]]
    assert engaged[0] == W[:, 0].max()
    assert left[1] < 0
    for post in res.posteriors:
        np.testing.assert_allclose(post.gammas.sum(1), 1, atol=1e-9)


def test_em_rejects_bad_arguments():
    with pytest.raises(ValueError):
        fit_glmhmm_em([], 2, seed=0)
    with pytest.raises(ValueError):
        fit_glmhmm_em([simulate(ModelParams("glmhmm", pack_glmhmm(np.eye(1), np.zeros((1, 4)))), 5, Rng(0))[0]], 0, seed=0)
    assert issubclass(EMError, RuntimeError)


def _4prl_seq(theta, T, seed):
    return simulate(ModelParams("4prl", theta), T, Rng(seed))[0]


def test_mle_beats_truth_and_respects_bounds():
    theta = [0.4, 0.2, 4.0, 0.3]
    seq = _4prl_seq(theta, 300, 1)
    fit = fit_mle("4prl", seq, n_restarts=5, seed=0)
    assert negative_loglik("4prl", theta, seq) >= fit.objective - 1e-9
    lo, hi = zip(*((0, 1), (0, 1), (0, 10), (0, 1)))
    assert np.all(fit.params.theta >= lo) and np.all(fit.params.theta <= hi)


def test_mle_on_a_slice_matches_grid_search():
    theta = [0.4, 0.2, 4.0, 0.3]
    seq = _4prl_seq(theta, 200, 2)
    fixed = [(0.4, 0.4), (0.2, 0.2), (0.0, 10.0), (0.3, 0.3)]
    fit = fit_mle("4prl", seq, bounds=fixed, n_restarts=3, seed=0)
    best, step = grid_argmax(lambda b: -negative_loglik("4prl", [0.4, 0.2, b, 0.3], seq), 0.0, 10.0)
    assert abs(fit.params.theta[2] - best) <= step


def test_map_with_flat_prior_equals_mle():
    seq = _4prl_seq([0.6, 0.3, 6.0, 0.1], 200, 3)
    flat = PriorSpec("4prl", {"alpha_pos": Dist.uniform(0, 1), "alpha_neg": Dist.uniform(0, 1),
                              "beta": Dist.uniform(0, 10), "kappa": Dist.uniform(0, 1)})
    a = fit_mle("4prl", seq, n_restarts=3, seed=7)
    b = fit_map("4prl", seq, flat, n_restarts=3, seed=7)
    np.testing.assert_allclose(a.params.theta, b.params.theta, atol=1e-6)


def test_map_with_sharp_prior_returns_prior_mean():
    seq = _4prl_seq([0.6, 0.3, 6.0, 0.1], 200, 3)
    mean = {"alpha_pos": 0.2, "alpha_neg": 0.7, "beta": 2.0, "kappa": 0.5}
    sharp = PriorSpec("4prl", {k: Dist.normal(v, 1e-3) for k, v in mean.items()})
    fit = fit_map("4prl", seq, sharp, n_restarts=3, seed=0)
    np.testing.assert_allclose(fit.params.theta, list(mean.values()), atol=0.01)


def test_beta_prior_pulls_extreme_temperatures_inward():
    prior = PriorSpec("4prl", {**dataset.default_prior("4prl").params, "beta": Dist.beta(5, 5, 0, 10)})
    moved = []
    for i, beta in enumerate([0.5, 0.8, 9.2, 9.5]):
        seq = _4prl_seq([0.5, 0.5, beta, 0.2], 100, 20 + i)
        m = fit_mle("4prl", seq, n_restarts=4, seed=i).params.theta[2]
        p = fit_map("4prl", seq, prior, n_restarts=4, seed=i).params.theta[2]
        moved.append(abs(p - 5) < abs(m - 5))
    assert all(moved)


def test_map_rejects_impossible_prior():
    seq = _4prl_seq([0.5, 0.5, 3, 0.2], 20, 0)
    prior = PriorSpec("4prl", {"beta": Dist.uniform(20, 30)})
    with pytest.raises(FitError):
        fit_map("4prl", seq, prior, n_restarts=1)


def test_intractable_models_have_no_mle():
    seq = simulate(ModelParams("hrl", [0.5, 3.0]), 10, Rng(0))[0]
    with pytest.raises(ModelError):
        fit_mle("hrl", seq)
