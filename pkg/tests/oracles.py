"""Brute-force reference computations used to check the fast implementations.

Everything here is written as plain loops over explicit enumerations so it
shares no code path with the package under test.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def hmm_by_enumeration(A, log_emit, init):
    """Log-likelihood and smoothed marginals by summing over every state path."""
    T, K = log_emit.shape
    emit = np.exp(log_emit)
    total = 0.0
    gammas = np.zeros((T, K))
    xis = np.zeros((max(T - 1, 0), K, K))
    for path in itertools.product(range(K), repeat=T):
        p = init[path[0]] * emit[0, path[0]]
        for t in range(1, T):
            p *= A[path[t - 1], path[t]] * emit[t, path[t]]
        total += p
        for t in range(T):
            gammas[t, path[t]] += p
        for t in range(T - 1):
            xis[t, path[t], path[t + 1]] += p
    return math.log(total), gammas / total, xis / total


def metarl_engaged_by_enumeration(t01, t10, p_engaged_emit):
    """Engaged-state marginals over all 2^T attention paths (0 random, 1 engaged)."""
    T = len(p_engaged_emit)
    s = t01 + t10
    pe0 = 1.0 if s == 0 else t01 / s
    trans = [[1 - t01, t01], [t10, 1 - t10]]
    total, engaged = 0.0, np.zeros(T)
    for path in itertools.product((0, 1), repeat=T):
        p = pe0 if path[0] == 1 else 1 - pe0
        for t in range(T):
            if t:
                p *= trans[path[t - 1]][path[t]]
            p *= p_engaged_emit[t] if path[t] == 1 else 0.5
        total += p
        engaged += p * np.array(path)
    return math.log(total), engaged / total


def hrl_filter_by_enumeration(alpha, beta, directions, actions, rewards, q0=0.5):
    """Filtering posterior P(arrow_t | actions_1..t) from all C^T arrow sequences."""
    T, C = directions.shape
    side = np.where(np.asarray(actions) > 0, 1.0, -1.0)
    out = np.zeros((T, C))
    for t_end in range(T):
        for arrows in itertools.product(range(C), repeat=t_end + 1):
            q = [q0] * C
            p = 1.0
            for t, k in enumerate(arrows):
                m = max(q)
                e = [math.exp(beta * (v - m)) for v in q]
                p *= e[k] / sum(e)
                if directions[t, k] != side[t]:
                    p = 0.0
                    break
                q[k] += alpha * (rewards[t] - q[k])
            out[t_end, arrows[-1]] += p
        out[t_end] /= out[t_end].sum()
    return out


def gru_unrolled(x, Wz, Wr, Wh, Uz, Ur, Uh, bz, br, bh):
    """One GRU direction written out component by component with Python floats."""
    H = len(bz)
    h = [0.0] * H
    states = []

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    for xt in x:
        z = [sig(sum(xt[i] * Wz[i][j] for i in range(len(xt))) + sum(h[i] * Uz[i][j] for i in range(H)) + bz[j]) for j in range(H)]
        r = [sig(sum(xt[i] * Wr[i][j] for i in range(len(xt))) + sum(h[i] * Ur[i][j] for i in range(H)) + br[j]) for j in range(H)]
        rh = [r[i] * h[i] for i in range(H)]
        c = [math.tanh(sum(xt[i] * Wh[i][j] for i in range(len(xt))) + sum(rh[i] * Uh[i][j] for i in range(H)) + bh[j]) for j in range(H)]
        h = [(1 - z[j]) * h[j] + z[j] * c[j] for j in range(H)]
        states.append(list(h))
    return np.array(states)


def two_state_stationary(t01, t10):
    """P(state 1) for the chain with switch probabilities t01 (0->1) and t10 (1->0)."""
    return t01 / (t01 + t10)


def grid_argmax(f, lo, hi, n=10_000):
    xs = np.linspace(lo, hi, n)
    vals = np.array([f(x) for x in xs])
    return xs[int(np.argmax(vals))], xs[1] - xs[0]


def pearson(x, y):
    x = np.asarray(x, float) - np.mean(x)
    y = np.asarray(y, float) - np.mean(y)
    return float(x @ y / math.sqrt((x @ x) * (y @ y)))


def block_gradient_errors(weights, config, Y, targets, mask=None, dropout=None, h=1e-5):
    """Per-block ||analytic - central difference|| / (||analytic|| + 1e-8)."""
    from latentseq.lasenet.network import backward, forward, loss
    from latentseq.numcore import finite_difference_gradient

    _, _, grads = backward(weights, config, Y, targets, mask, dropout)
    m = np.ones(np.shape(Y)[:2], bool) if mask is None else mask
    errors = {}
    for name, block in weights.items():

        def f(x, name=name):
            w = dict(weights)
            w[name] = x
            return loss(forward(w, config, Y, m, dropout), targets, m, config)[0]

        fd = finite_difference_gradient(f, block, h)
        errors[name] = float(np.linalg.norm(grads[name] - fd) / (np.linalg.norm(grads[name]) + 1e-8))
    return errors


def hrl_evidence_by_enumeration(alpha, beta, directions, actions, rewards, q0=0.5):
    """P(actions | rewards, arrows shown) summed over every arrow sequence."""
    T, C = directions.shape
    side = np.where(np.asarray(actions) > 0, 1.0, -1.0)
    total = 0.0
    for arrows in itertools.product(range(C), repeat=T):
        q = [q0] * C
        p = 1.0
        for t, k in enumerate(arrows):
            if directions[t, k] != side[t]:
                p = 0.0
                break
            m = max(q)
            e = [math.exp(beta * (v - m)) for v in q]
            p *= e[k] / sum(e)
            q[k] += alpha * (rewards[t] - q[k])
        total += p
    return total
