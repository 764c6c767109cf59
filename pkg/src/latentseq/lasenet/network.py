"""Bidirectional GRU + pyramidal MLP with continuous, discrete and evidential heads.

Both GRU directions are stored stacked along a leading axis of size 2 and
advanced together; the backward direction reads the time-reversed input.
Padded steps (mask == 0) carry the hidden state through unchanged, so the
backward direction starts from a zero state at each sequence's last valid
step and padding never leaks into valid outputs.

Gate layout inside the fused kernels is ``[update z | reset r | candidate]``:

    z  = sigmoid(x W_z + h U_z + b_z)
    r  = sigmoid(x W_r + h U_r + b_r)
    hc = tanh(x W_h + (r * h) U_h + b_h)
    h' = (1 - z) * h + z * hc
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import digamma, gammaln

from ..numcore import Rng


class NetworkError(ValueError):
    pass


@dataclass
class NetworkConfig:
    input_dim: int
    gru_units: int = 128
    continuous_dim: int = 0
    n_classes: int = 0
    evidential_dim: int = 0
    dropout_rnn: float = 0.15
    dropout_mlp1: float = 0.05
    dropout_mlp2: float = 0.03
    learning_rate: float = 3e-4
    batch_size: int = 128
    max_epochs: int = 600
    patience: int = 35
    # reduce-on-plateau: multiply the learning rate by lr_decay after this many
    # epochs without validation improvement (0 disables)
    lr_decay_patience: int = 0
    lr_decay: float = 0.5
    clip_norm: float = 5.0
    evidential_reg: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.input_dim < 1 or self.gru_units < 2:
            raise NetworkError("input_dim must be >= 1 and gru_units >= 2")
        if self.continuous_dim and self.evidential_dim:
            raise NetworkError("continuous and evidential heads target the same channels; pick one")
        if not (self.continuous_dim or self.n_classes or self.evidential_dim):
            raise NetworkError("network needs at least one output head")
        if self.n_classes == 1:
            raise NetworkError("a discrete head needs at least 2 classes")
        if self.lr_decay_patience < 0 or not 0 < self.lr_decay <= 1:
            raise NetworkError("lr_decay must lie in (0, 1] and lr_decay_patience must be >= 0")
        for name in ("dropout_rnn", "dropout_mlp1", "dropout_mlp2"):
            if not 0 <= getattr(self, name) < 1:
                raise NetworkError(f"{name} must lie in [0, 1)")

    @property
    def mlp_widths(self) -> tuple[int, int]:
        return self.gru_units, max(1, self.gru_units // 2)

    @property
    def target_dim(self) -> int:
        return self.continuous_dim or self.evidential_dim

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(**d)


def param_shapes(config: NetworkConfig) -> dict[str, tuple[int, ...]]:
    D, H = config.input_dim, config.gru_units
    w1, w2 = config.mlp_widths
    shapes = {
        "gru_W": (2, D, 3 * H),
        "gru_U": (2, H, 3 * H),
        "gru_b": (2, 3 * H),
        "mlp1_W": (2 * H, w1),
        "mlp1_b": (w1,),
        "mlp2_W": (w1, w2),
        "mlp2_b": (w2,),
    }
    if config.continuous_dim:
        shapes["cont_W"] = (w2, config.continuous_dim)
        shapes["cont_b"] = (config.continuous_dim,)
    if config.n_classes:
        shapes["disc_W"] = (w2, config.n_classes)
        shapes["disc_b"] = (config.n_classes,)
    if config.evidential_dim:
        shapes["evid_W"] = (w2, 4 * config.evidential_dim)
        shapes["evid_b"] = (4 * config.evidential_dim,)
    return shapes


def _glorot(rng: Rng, fan_in: int, fan_out: int, shape) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


def _orthogonal(rng: Rng, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    return q * np.sign(np.diag(r))


def init_weights(config: NetworkConfig, seed: int) -> dict[str, np.ndarray]:
    """Glorot-uniform kernels, orthogonal recurrent blocks, zero biases."""
    rng = Rng(seed)
    H = config.gru_units
    w = {}
    for name, shape in param_shapes(config).items():
        if name.endswith("_b"):
            w[name] = np.zeros(shape)
        elif name == "gru_W":
            w[name] = np.stack([_glorot(rng, shape[1], 3 * H, shape[1:]) for _ in range(2)])
        elif name == "gru_U":
            w[name] = np.stack(
                [np.concatenate([_orthogonal(rng, H) for _ in range(3)], axis=1) for _ in range(2)]
            )
        else:
            w[name] = _glorot(rng, shape[0], shape[1], shape)
    return w


def zero_weights(config: NetworkConfig) -> dict[str, np.ndarray]:
    return {k: np.zeros(s) for k, s in param_shapes(config).items()}


def check_weights(weights: dict, config: NetworkConfig) -> None:
    shapes = param_shapes(config)
    if set(weights) != set(shapes):
        raise NetworkError(f"weight blocks {sorted(weights)} do not match config {sorted(shapes)}")
    for k, s in shapes.items():
        if weights[k].shape != s:
            raise NetworkError(f"block {k} has shape {weights[k].shape}, expected {s}")


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


@dataclass
class DropoutMasks:
    """Inverted-dropout multipliers (already divided by the keep probability)."""

    summary: np.ndarray | None = None
    mlp1: np.ndarray | None = None
    mlp2: np.ndarray | None = None

    @classmethod
    def sample(cls, config: NetworkConfig, B: int, T: int, rng: Rng) -> "DropoutMasks":
        H = config.gru_units
        w1, w2 = config.mlp_widths

        def draw(rate, width):
            if rate <= 0:
                return None
            keep = 1.0 - rate
            return (rng.uniform(size=(B, T, width)) < keep) / keep

        return cls(draw(config.dropout_rnn, 2 * H), draw(config.dropout_mlp1, w1), draw(config.dropout_mlp2, w2))


@dataclass
class Targets:
    continuous: np.ndarray | None = None  # B x T x C
    labels: np.ndarray | None = None  # B x T ints


@dataclass
class Outputs:
    continuous: np.ndarray | None = None
    logits: np.ndarray | None = None
    probs: np.ndarray | None = None
    evidential: dict | None = None
    cache: dict = field(default_factory=dict, repr=False)


def _check_inputs(config: NetworkConfig, Y, mask):
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 2:
        Y = Y[None]
    if Y.ndim != 3 or Y.shape[2] != config.input_dim:
        raise NetworkError(f"input must be (B, T, {config.input_dim}), got {Y.shape}")
    if mask is None:
        mask = np.ones(Y.shape[:2], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 1:
        mask = mask[None]
    if mask.shape != Y.shape[:2]:
        raise NetworkError("mask shape does not match input")
    if not np.all(np.isfinite(Y)):
        raise NetworkError("input contains non-finite values")
    return Y, mask


def _gru_forward(weights, X, mask, keep):
    """Run both directions. Returns summary S (B, T, 2H) and the step cache."""
    B, T, _ = X.shape
    W, U, b = weights["gru_W"], weights["gru_U"], weights["gru_b"]
    H = U.shape[1]
    # time-major, direction-stacked inputs: (T, 2, B, D)
    Xt = np.stack([X, X[:, ::-1]], axis=0).transpose(2, 0, 1, 3)
    Mt = np.stack([mask, mask[:, ::-1]], axis=0).transpose(2, 0, 1)[..., None]
    XW = np.matmul(Xt, W[None]) + b[None, :, None, :]  # (T, 2, B, 3H)
    Uzr, Uh = U[:, :, : 2 * H], U[:, :, 2 * H :]
    h = np.zeros((2, B, H))
    out = np.empty((T, 2, B, H))
    if keep:
        hprev = np.empty((T, 2, B, H))
        zs = np.empty((T, 2, B, H))
        rs = np.empty((T, 2, B, H))
        hcs = np.empty((T, 2, B, H))
    for t in range(T):
        g = XW[t]
        zr = g[..., : 2 * H] + np.matmul(h, Uzr)
        zr = 1.0 / (1.0 + np.exp(-zr))
        z, r = zr[..., :H], zr[..., H:]
        hc = np.tanh(g[..., 2 * H :] + np.matmul(r * h, Uh))
        hn = h + z * (hc - h)
        if keep:
            hprev[t], zs[t], rs[t], hcs[t] = h, z, r, hc
        h = np.where(Mt[t], hn, h)
        out[t] = h
    fwd = out[:, 0].transpose(1, 0, 2)
    bwd = out[::-1, 1].transpose(1, 0, 2)
    S = np.concatenate([fwd, bwd], axis=-1)
    cache = {"Xt": Xt, "Mt": Mt}
    if keep:
        cache.update(hprev=hprev, z=zs, r=rs, hc=hcs)
    return S, cache


def forward(weights, config: NetworkConfig, Y, mask=None, dropout: DropoutMasks | None = None, keep_cache=False):
    """Per-trial head outputs for a batch of encoded sequences."""
    check_weights(weights, config)
    X, mask = _check_inputs(config, Y, mask)
    S, gcache = _gru_forward(weights, X, mask, keep_cache)
    dropout = dropout or DropoutMasks()
    Sd = S * dropout.summary if dropout.summary is not None else S
    A1 = Sd @ weights["mlp1_W"] + weights["mlp1_b"]
    H1 = np.maximum(A1, 0.0)
    H1d = H1 * dropout.mlp1 if dropout.mlp1 is not None else H1
    A2 = H1d @ weights["mlp2_W"] + weights["mlp2_b"]
    H2 = np.maximum(A2, 0.0)
    H2d = H2 * dropout.mlp2 if dropout.mlp2 is not None else H2
    out = Outputs()
    if config.continuous_dim:
        out.continuous = H2d @ weights["cont_W"] + weights["cont_b"]
    if config.n_classes:
        logits = H2d @ weights["disc_W"] + weights["disc_b"]
        z = logits - logits.max(axis=-1, keepdims=True)
        e = np.exp(z)
        out.logits = logits
        out.probs = e / e.sum(axis=-1, keepdims=True)
    if config.evidential_dim:
        C = config.evidential_dim
        raw = H2d @ weights["evid_W"] + weights["evid_b"]
        out.evidential = {
            "raw": raw,
            "gamma": raw[..., :C],
            "nu": _softplus(raw[..., C : 2 * C]),
            "alpha": _softplus(raw[..., 2 * C : 3 * C]) + 1.0,
            "beta": _softplus(raw[..., 3 * C :]),
        }
    if keep_cache:
        out.cache = dict(gcache, X=X, mask=mask, S=S, Sd=Sd, A1=A1, H1d=H1d, A2=A2, H2d=H2d, dropout=dropout)
    return out


def evidential_terms(ev: dict, y: np.ndarray):
    """Normal-Inverse-Gamma negative log-likelihood and evidence regulariser, elementwise."""
    gamma, nu, alpha, beta = ev["gamma"], ev["nu"], ev["alpha"], ev["beta"]
    err = y - gamma
    omega = 2.0 * beta * (1.0 + nu)
    nll = (
        0.5 * np.log(np.pi / nu)
        - alpha * np.log(omega)
        + (alpha + 0.5) * np.log(nu * err * err + omega)
        + gammaln(alpha)
        - gammaln(alpha + 0.5)
    )
    reg = np.abs(err) * (2.0 * nu + alpha)
    return nll, reg


def loss(outputs: Outputs, targets: Targets, mask, config: NetworkConfig):
    """Masked loss; returns (total, per-head breakdown).

    Each head's loss is a mean over valid steps (and channels); the total is
    their unweighted sum.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 1:
        mask = mask[None]
    sums, counts = loss_sums(outputs, targets, mask, config)
    parts = {k: sums[k] / counts[k] for k in sums}
    return float(sum(parts.values())), parts


def loss_sums(outputs: Outputs, targets: Targets, mask, config: NetworkConfig):
    """Unnormalised per-head loss sums and their element counts."""
    m = mask.astype(float)
    n = float(m.sum())
    if n == 0:
        raise NetworkError("loss over an empty mask")
    sums, counts = {}, {}
    if config.continuous_dim:
        d = outputs.continuous - _cont_targets(targets, config)
        sums["mse"] = float(np.sum(m[..., None] * d * d))
        counts["mse"] = n * config.continuous_dim
    if config.n_classes:
        labels = _labels(targets, config, mask)
        logp = outputs.logits - outputs.logits.max(axis=-1, keepdims=True)
        logp = logp - np.log(np.exp(logp).sum(axis=-1, keepdims=True))
        picked = np.take_along_axis(logp, labels[..., None], axis=-1)[..., 0]
        sums["ce"] = float(-np.sum(m * picked))
        counts["ce"] = n
    if config.evidential_dim:
        nll, reg = evidential_terms(outputs.evidential, _cont_targets(targets, config))
        sums["evidential"] = float(np.sum(m[..., None] * (nll + config.evidential_reg * reg)))
        counts["evidential"] = n * config.evidential_dim
    return sums, counts


def _cont_targets(targets: Targets, config: NetworkConfig) -> np.ndarray:
    y = targets.continuous
    if y is None or y.shape[-1] != config.target_dim:
        raise NetworkError(f"continuous targets must have {config.target_dim} channels")
    return y


def _labels(targets: Targets, config: NetworkConfig, mask) -> np.ndarray:
    if targets.labels is None:
        raise NetworkError("discrete head needs label targets")
    labels = np.asarray(targets.labels, dtype=np.int64)
    valid = labels[mask]
    if valid.size and (valid.min() < 0 or valid.max() >= config.n_classes):
        raise NetworkError(f"class label outside [0, {config.n_classes})")
    # padded positions may hold anything; point them at class 0
    return np.where(mask, labels, 0)


def backward(weights, config: NetworkConfig, Y, targets: Targets, mask=None, dropout: DropoutMasks | None = None):
    """Loss, breakdown and gradients of every weight block (BPTT through both directions)."""
    out = forward(weights, config, Y, mask, dropout, keep_cache=True)
    c = out.cache
    mask = c["mask"]
    total, parts = loss(out, targets, mask, config)
    m = mask.astype(float)[..., None]
    n = float(mask.sum())
    H2d = c["H2d"]
    grads: dict[str, np.ndarray] = {}
    dH2d = np.zeros_like(H2d)

    def head(name, dout):
        W = weights[f"{name}_W"]
        grads[f"{name}_W"] = _flat_matmul_T(H2d, dout)
        grads[f"{name}_b"] = dout.sum(axis=(0, 1))
        return dout @ W.T

    if config.continuous_dim:
        d = out.continuous - _cont_targets(targets, config)
        dH2d += head("cont", 2.0 * m * d / (n * config.continuous_dim))
    if config.n_classes:
        labels = _labels(targets, config, mask)
        onehot = np.eye(config.n_classes)[labels]
        dH2d += head("disc", m * (out.probs - onehot) / n)
    if config.evidential_dim:
        draw = _evidential_grad(out.evidential, _cont_targets(targets, config), config.evidential_reg)
        dH2d += head("evid", m * draw / (n * config.evidential_dim))

    drop = c["dropout"]
    dH2 = dH2d * drop.mlp2 if drop.mlp2 is not None else dH2d
    dA2 = dH2 * (c["A2"] > 0)
    grads["mlp2_W"] = _flat_matmul_T(c["H1d"], dA2)
    grads["mlp2_b"] = dA2.sum(axis=(0, 1))
    dH1d = dA2 @ weights["mlp2_W"].T
    dH1 = dH1d * drop.mlp1 if drop.mlp1 is not None else dH1d
    dA1 = dH1 * (c["A1"] > 0)
    grads["mlp1_W"] = _flat_matmul_T(c["Sd"], dA1)
    grads["mlp1_b"] = dA1.sum(axis=(0, 1))
    dSd = dA1 @ weights["mlp1_W"].T
    dS = dSd * drop.summary if drop.summary is not None else dSd
    grads.update(_gru_backward(weights, c, dS))
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NetworkError(f"non-finite gradient in block {k}")
    return total, parts, grads


def _flat_matmul_T(a, b):
    """sum over (batch, time) of outer products: a^T b with leading axes flattened."""
    return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])


def _evidential_grad(ev, y, lam):
    """d(nll + lam * reg)/d(raw head outputs), elementwise."""
    C = y.shape[-1]
    raw = ev["raw"]
    gamma, nu, alpha, beta = ev["gamma"], ev["nu"], ev["alpha"], ev["beta"]
    err = y - gamma
    omega = 2.0 * beta * (1.0 + nu)
    denom = nu * err * err + omega
    a5 = alpha + 0.5
    d_gamma = a5 * (-2.0 * nu * err) / denom - lam * np.sign(err) * (2.0 * nu + alpha)
    d_nu = -0.5 / nu - alpha * 2.0 * beta / omega + a5 * (err * err + 2.0 * beta) / denom + lam * 2.0 * np.abs(err)
    d_alpha = -np.log(omega) + np.log(denom) + digamma(alpha) - digamma(a5) + lam * np.abs(err)
    d_beta = -alpha * 2.0 * (1.0 + nu) / omega + a5 * 2.0 * (1.0 + nu) / denom
    sig = lambda x: 1.0 / (1.0 + np.exp(-x))  # noqa: E731
    return np.concatenate(
        [
            d_gamma,
            d_nu * sig(raw[..., C : 2 * C]),
            d_alpha * sig(raw[..., 2 * C : 3 * C]),
            d_beta * sig(raw[..., 3 * C :]),
        ],
        axis=-1,
    )


def _gru_backward(weights, c, dS):
    U = weights["gru_U"]
    H = U.shape[1]
    Uzr_T = U[:, :, : 2 * H].transpose(0, 2, 1)
    Uh_T = U[:, :, 2 * H :].transpose(0, 2, 1)
    hprev, zs, rs, hcs, Mt = c["hprev"], c["z"], c["r"], c["hc"], c["Mt"]
    T = hprev.shape[0]
    # gradient w.r.t. each direction's emitted state, time-major
    dOut = np.stack([dS[..., :H].transpose(1, 0, 2), dS[:, ::-1, H:].transpose(1, 0, 2)], axis=1)
    dG = np.empty(hprev.shape[:-1] + (3 * H,))
    dh = np.zeros_like(hprev[0])
    for t in range(T - 1, -1, -1):
        dh = dh + dOut[t]
        m = Mt[t]
        dhn = np.where(m, dh, 0.0)
        dh = np.where(m, 0.0, dh)
        h, z, r, hc = hprev[t], zs[t], rs[t], hcs[t]
        dz = dhn * (hc - h)
        da_h = dhn * z * (1.0 - hc * hc)
        drh = np.matmul(da_h, Uh_T)
        da_zr = np.concatenate([dz * z * (1.0 - z), drh * h * r * (1.0 - r)], axis=-1)
        dh = dh + dhn * (1.0 - z) + drh * r + np.matmul(da_zr, Uzr_T)
        dG[t, ..., : 2 * H] = da_zr
        dG[t, ..., 2 * H :] = da_h
    Xt = c["Xt"]
    # reduce over (time, batch) per direction
    Xd = Xt.transpose(1, 0, 2, 3).reshape(2, -1, Xt.shape[-1])
    Gd = dG.transpose(1, 0, 2, 3).reshape(2, -1, 3 * H)
    hd = hprev.transpose(1, 0, 2, 3).reshape(2, -1, H)
    rh = (rs * hprev).transpose(1, 0, 2, 3).reshape(2, -1, H)
    dU = np.empty_like(U)
    dU[:, :, : 2 * H] = np.matmul(hd.transpose(0, 2, 1), Gd[..., : 2 * H])
    dU[:, :, 2 * H :] = np.matmul(rh.transpose(0, 2, 1), Gd[..., 2 * H :])
    return {
        "gru_W": np.matmul(Xd.transpose(0, 2, 1), Gd),
        "gru_U": dU,
        "gru_b": Gd.sum(axis=1),
    }
