"""Forward-backward smoothing, GLM-HMM expectation-maximisation, Meta RL state posterior."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.optimize import linear_sum_assignment

from ..cogmodels import ModelParams, TrialSequence, design_matrix, metarl_emissions, pack_glmhmm
from ..cogmodels.types import ModelError
from ..numcore import Rng, log_sigmoid, sigmoid
from ..priors import GLM_STATE_MEANS

STOCHASTIC_TOL = 1e-9


class EMError(RuntimeError):
    pass


@dataclass
class HmmPosterior:
    gammas: np.ndarray  # T x K
    xis: np.ndarray | None  # (T-1) x K x K, or None when only sums were kept
    loglik: float
    xi_sum: np.ndarray | None = None


def check_stochastic(A, init) -> None:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ModelError("transition matrix must be square")
    if np.any(A < 0) or np.any(np.abs(A.sum(axis=1) - 1.0) > STOCHASTIC_TOL):
        raise ModelError("transition matrix rows must be non-negative and sum to 1")
    init = np.asarray(init, dtype=float)
    if init.shape != (A.shape[0],) or np.any(init < 0) or abs(init.sum() - 1.0) > STOCHASTIC_TOL:
        raise ModelError("initial distribution must be a probability vector over the states")


@njit(cache=True)
def _forward_backward(A, log_emit, init, keep_xis):
    T, K = log_emit.shape
    alpha = np.empty((T, K))
    scale = np.empty(T)
    b = np.empty((T, K))
    loglik = 0.0
    for t in range(T):
        m = log_emit[t].max()
        for k in range(K):
            b[t, k] = math.exp(log_emit[t, k] - m)
        for k in range(K):
            if t == 0:
                s = init[k]
            else:
                s = 0.0
                for j in range(K):
                    s += alpha[t - 1, j] * A[j, k]
            alpha[t, k] = s * b[t, k]
        c = alpha[t].sum()
        scale[t] = c
        if c <= 0.0:
            return alpha, np.empty((0, K, K)), np.zeros((K, K)), -np.inf
        alpha[t] /= c
        loglik += m + math.log(c)
    beta = np.ones((T, K))
    gammas = np.empty((T, K))
    xis = np.zeros((T - 1 if keep_xis and T > 0 else 0, K, K))
    xi_sum = np.zeros((K, K))
    gammas[T - 1] = alpha[T - 1]
    for t in range(T - 2, -1, -1):
        for j in range(K):
            s = 0.0
            for k in range(K):
                s += A[j, k] * b[t + 1, k] * beta[t + 1, k]
            beta[t, j] = s / scale[t + 1]
        g = 0.0
        for j in range(K):
            gammas[t, j] = alpha[t, j] * beta[t, j]
            g += gammas[t, j]
        for j in range(K):
            gammas[t, j] /= g
        z = 0.0
        for j in range(K):
            for k in range(K):
                z += alpha[t, j] * A[j, k] * b[t + 1, k] * beta[t + 1, k]
        for j in range(K):
            for k in range(K):
                x = alpha[t, j] * A[j, k] * b[t + 1, k] * beta[t + 1, k] / z
                xi_sum[j, k] += x
                if keep_xis:
                    xis[t, j, k] = x
    return gammas, xis, xi_sum, loglik


def forward_backward(A, log_emit, init, keep_xis: bool = True) -> HmmPosterior:
    """Scaled alpha-beta recursion; emissions given as log-probabilities (T x K)."""
    check_stochastic(A, init)
    log_emit = np.ascontiguousarray(log_emit, dtype=float)
    if log_emit.ndim != 2 or log_emit.shape[1] != np.shape(A)[0]:
        raise ModelError("emission matrix must be T x K")
    if log_emit.shape[0] == 0:
        raise ModelError("empty sequence")
    g, xis, xs, ll = _forward_backward(
        np.ascontiguousarray(A, dtype=float), log_emit, np.asarray(init, dtype=float), keep_xis
    )
    if not np.isfinite(ll):
        raise ModelError("observation sequence has zero probability under the model")
    return HmmPosterior(g, xis if keep_xis else None, float(ll), xs)


def metarl_state_posterior(params: ModelParams, seq: TrialSequence) -> np.ndarray:
    """Smoothed probability of the engaged state on every trial."""
    t01, t10 = params.theta[0], params.theta[1]
    A = np.array([[1.0 - t01, t01], [t10, 1.0 - t10]])
    s = t01 + t10
    pe = 1.0 if s == 0 else t01 / s
    with np.errstate(divide="ignore"):
        log_emit = np.log(metarl_emissions(params, seq))
    return forward_backward(A, log_emit, np.array([1.0 - pe, pe]), keep_xis=False).gammas[:, 1]


# ---------------------------------------------------------------- GLM-HMM EM


def glm_log_emissions(X: np.ndarray, y: np.ndarray, W: np.ndarray) -> np.ndarray:
    """log P(y_t | state k) for Bernoulli-logistic policies; y in {0, 1}."""
    eta = X @ W.T  # T x K
    sign = np.where(y[:, None] > 0, 1.0, -1.0)
    return log_sigmoid(sign * eta)


@dataclass
class EMResult:
    params: ModelParams
    init: np.ndarray
    posteriors: list[HmmPosterior]
    loglik_history: list[float] = field(default_factory=list)
    n_iters: int = 0
    converged: bool = False

    @property
    def loglik(self) -> float:
        return self.loglik_history[-1]


def _weighted_logistic_newton(X, y, weights, w0, max_steps=25, tol=1e-10):
    """Maximise sum_t weights_t log P(y_t | x_t, w) by damped Newton-Raphson."""

    def objective(w):
        eta = X @ w
        return float(np.sum(weights * np.where(y > 0, log_sigmoid(eta), log_sigmoid(-eta))))

    w = w0.copy()
    f = objective(w)
    for _ in range(max_steps):
        eta = X @ w
        p = sigmoid(eta)
        grad = X.T @ (weights * (y - p))
        hess = (X * (weights * p * (1.0 - p))[:, None]).T @ X + 1e-9 * np.eye(X.shape[1])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = grad
        # halve until the objective improves; a plain gradient step is the fallback
        for direction in (step, grad):
            t = 1.0
            while t > 1e-10:
                cand = w + t * direction
                fc = objective(cand)
                if fc >= f:
                    break
                t *= 0.5
            else:
                continue
            break
        else:
            return w, f
        gain = fc - f
        w, f = cand, fc
        if gain < tol:
            break
    return w, f


def _em_single(Xs, ys, K, A0, W0, pi0, max_iters, tol):
    A, W, pi = A0.copy(), W0.copy(), pi0.copy()
    X_all = np.concatenate(Xs)
    y_all = np.concatenate(ys).astype(float)
    history: list[float] = []
    prev_ecll = -np.inf
    converged = False
    posts: list[HmmPosterior] = []
    it = 0
    for it in range(1, max_iters + 1):
        posts = [forward_backward(A, glm_log_emissions(X, y, W), pi, keep_xis=False) for X, y in zip(Xs, ys)]
        ll = float(sum(p.loglik for p in posts))
        if history and ll < history[-1] - 1e-8:
            raise EMError(f"observed-data log-likelihood decreased at iteration {it}: {history[-1]} -> {ll}")
        history.append(ll)
        G = np.concatenate([p.gammas for p in posts])
        xi = sum(p.xi_sum for p in posts)
        g0 = sum(p.gammas[0] for p in posts)
        # M-step: closed-form transitions and initial distribution, Newton for each GLM
        A = xi / np.maximum(xi.sum(axis=1, keepdims=True), 1e-300)
        A = np.where(xi.sum(axis=1, keepdims=True) > 0, A, np.eye(K))
        pi = g0 / g0.sum()
        ecll_glm = 0.0
        for k in range(K):
            W[k], fk = _weighted_logistic_newton(X_all, y_all, G[:, k], W[k])
            ecll_glm += fk
        with np.errstate(divide="ignore"):
            ecll = float(np.sum(g0 * np.log(pi + 1e-300)) + np.sum(xi * np.log(A + 1e-300)) + ecll_glm)
        if ecll - prev_ecll < tol:
            converged = True
            break
        prev_ecll = ecll
    # final E-step under the returned parameters
    posts = [forward_backward(A, glm_log_emissions(X, y, W), pi, keep_xis=True) for X, y in zip(Xs, ys)]
    ll = float(sum(p.loglik for p in posts))
    if ll < history[-1] - 1e-8:
        raise EMError("observed-data log-likelihood decreased on the final iteration")
    history.append(ll)
    return A, W, pi, posts, history, it, converged


def initial_transitions(K: int, stay: float = 0.90) -> np.ndarray:
    if K == 1:
        return np.ones((1, 1))
    return np.full((K, K), (1.0 - stay) / (K - 1)) + (stay - (1.0 - stay) / (K - 1)) * np.eye(K)


def fit_glmhmm_em(
    seqs: list[TrialSequence],
    K: int,
    seed: int,
    n_restarts: int = 5,
    max_iters: int = 300,
    tol: float = 1e-4,
    init_W: np.ndarray | None = None,
) -> EMResult:
    """EM over one or more sequences sharing a single GLM-HMM.

    Each restart starts from sticky transitions (0.90 on the diagonal) and
    GLM weights drawn from N(0, 1); the restart with the best final
    log-likelihood is returned.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if not seqs:
        raise ValueError("EM needs at least one sequence")
    Xs = [design_matrix(s) for s in seqs]
    ys = [s.actions for s in seqs]
    D = Xs[0].shape[1]
    rng = Rng(seed)
    best = None
    for restart in range(n_restarts):
        W0 = init_W.copy() if init_W is not None and restart == 0 else rng.substream(restart).normal(size=(K, D))
        out = _em_single(Xs, ys, K, initial_transitions(K), W0, np.full(K, 1.0 / K), max_iters, tol)
        if best is None or out[4][-1] > best[4][-1]:
            best = out
    A, W, pi, posts, history, n_iters, converged = best
    return EMResult(ModelParams("glmhmm", pack_glmhmm(A, W)), pi, posts, history, n_iters, converged)


def align_states_to_prototypes(W: np.ndarray, state_names) -> np.ndarray:
    """Permutation ``perm`` with fitted state ``perm[j]`` playing prototype role ``j``.

    Fitted GLM weight vectors are matched to the prior's per-state weight
    means by minimum total squared distance, so no true labels are used.
    """
    proto = np.array([GLM_STATE_MEANS[n] for n in state_names])
    cost = ((proto[:, None, :] - W[None, :, :]) ** 2).sum(axis=-1)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(len(state_names), dtype=np.int64)
    perm[rows] = cols
    return perm
