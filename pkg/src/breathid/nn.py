"""CNN-LSTM speaker classifier with hand-written forward and backward passes.

Layer stack: same-padded 2-D convolution + ReLU, 2x1 max-pool along
frequency, LSTM over time (last hidden state), inverted dropout, dense
softmax. Training minimizes the one-hot KL loss with Adadelta, one
example per update.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

log = logging.getLogger(__name__)

POOL = 2
PARAM_NAMES = ("conv.filters", "conv.biases", "lstm.W", "lstm.b", "dense.W", "dense.b")


class TrainingError(RuntimeError):
    pass


# ---------------------------------------------------------------- parameters

@dataclass
class NetworkParams:
    """All trainable tensors plus the dropout rate.

    ``lstm.W`` stacks the forget, input, output and candidate gates (in
    that order) row-wise; columns are ``[x_t; h_{t-1}]``.
    """

    tensors: dict
    dropout_rate: float = 0.4

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        L, U, V = self.tensors["conv.filters"].shape
        if U % 2 == 0 or V % 2 == 0:
            raise ValueError("filter height and width must be odd")

    def __getitem__(self, name):
        return self.tensors[name]

    @property
    def n_filters(self) -> int:
        return self.tensors["conv.filters"].shape[0]

    @property
    def hidden(self) -> int:
        return self.tensors["lstm.b"].shape[0] // 4

    @property
    def n_classes(self) -> int:
        return self.tensors["dense.b"].shape[0]

    @property
    def input_dim(self) -> int:
        return self.tensors["lstm.W"].shape[1] - self.hidden

    @property
    def n_freq(self) -> int:
        """Input rows accepted by this network (pooled rows * 2, rounded down)."""
        return self.input_dim // self.n_filters * POOL

    def copy(self) -> "NetworkParams":
        return NetworkParams({k: v.copy() for k, v in self.tensors.items()}, self.dropout_rate)


def init_network(n_freq: int, n_classes: int, n_filters: int = 8, filter_shape=(3, 3),
                 hidden: int = 64, dropout_rate: float = 0.4, seed: int = 0) -> NetworkParams:
    """Uniform +-1/sqrt(fan_in) weights, zero biases, forget-gate bias 1."""
    rng = np.random.default_rng(seed)
    U, V = filter_shape
    d_in = n_filters * (n_freq // POOL)
    lim_c = 1.0 / np.sqrt(U * V)
    lim_l = 1.0 / np.sqrt(d_in + hidden)
    lim_d = 1.0 / np.sqrt(hidden)
    lstm_b = np.zeros(4 * hidden)
    lstm_b[:hidden] = 1.0
    tensors = {
        "conv.filters": rng.uniform(-lim_c, lim_c, (n_filters, U, V)),
        "conv.biases": np.zeros(n_filters),
        "lstm.W": rng.uniform(-lim_l, lim_l, (4 * hidden, d_in + hidden)),
        "lstm.b": lstm_b,
        "dense.W": rng.uniform(-lim_d, lim_d, (n_classes, hidden)),
        "dense.b": np.zeros(n_classes),
    }
    return NetworkParams(tensors, dropout_rate)


# ---------------------------------------------------------------- layers

def _patches(x: np.ndarray, U: int, V: int) -> np.ndarray:
    """Zero-padded U x V neighbourhoods of every cell, shape (F*T, U*V)."""
    F, T = x.shape
    padded = np.pad(x, ((U // 2, U // 2), (V // 2, V // 2)))
    win = np.lib.stride_tricks.sliding_window_view(padded, (U, V))
    return win.reshape(F * T, U * V)


def conv_forward(x: np.ndarray, filters: np.ndarray, biases: np.ndarray):
    """Same-padded correlation with each filter, plus bias, then ReLU.

    Returns ``(activations, cache)``; activations have shape (L, F, T).
    """
    x = np.asarray(x, dtype=np.float64)
    L, U, V = filters.shape
    F, T = x.shape
    if U > F or V > T:
        raise ValueError(f"filter {U}x{V} larger than input {F}x{T}")
    patches = _patches(x, U, V)
    z = (filters.reshape(L, U * V) @ patches.T).reshape(L, F, T) + biases[:, None, None]
    out = np.maximum(z, 0.0)
    return out, (patches, z, filters.shape)


def conv_backward(d_out: np.ndarray, cache):
    """Gradients for filters and biases (the input is data, so no input grad)."""
    patches, z, shape = cache
    L, U, V = shape
    dz = d_out * (z > 0)
    d_filters = (dz.reshape(L, -1) @ patches).reshape(L, U, V)
    return d_filters, dz.sum(axis=(1, 2))


def maxpool_forward(x: np.ndarray):
    """Non-overlapping 2x1 max-pool along frequency (axis 1).

    An odd trailing row is dropped; ties go to the lower index.
    Returns ``(pooled, argmax)``.
    """
    L, F, T = x.shape
    if F < POOL:
        raise ValueError("need at least two frequency rows to pool")
    Fp = F // POOL
    grouped = x[:, : Fp * POOL, :].reshape(L, Fp, POOL, T)
    arg = np.argmax(grouped, axis=2)
    pooled = np.take_along_axis(grouped, arg[:, :, None, :], axis=2)[:, :, 0, :]
    return pooled, arg


def maxpool_backward(d_out: np.ndarray, arg: np.ndarray, in_shape) -> np.ndarray:
    L, F, T = in_shape
    Fp = d_out.shape[1]
    grouped = np.zeros((L, Fp, POOL, T))
    np.put_along_axis(grouped, arg[:, :, None, :], d_out[:, :, None, :], axis=2)
    d_in = np.zeros(in_shape)
    d_in[:, : Fp * POOL, :] = grouped.reshape(L, Fp * POOL, T)
    return d_in


def lstm_forward(x_seq: np.ndarray, W: np.ndarray, b: np.ndarray):
    """Run the recurrence from zero state; return ``(h_T, cache)``."""
    x_seq = np.atleast_2d(np.asarray(x_seq, dtype=np.float64))
    T, d_in = x_seq.shape
    H = b.shape[0] // 4
    Wx, Wh = W[:, :d_in], W[:, d_in:]
    zx = x_seq @ Wx.T + b
    hs = np.zeros((T + 1, H))
    cs = np.zeros((T + 1, H))
    gates = np.empty((T, 4 * H))
    for t in range(T):
        z = zx[t] + Wh @ hs[t]
        g = np.empty(4 * H)
        g[: 3 * H] = expit(z[: 3 * H])
        g[3 * H:] = np.tanh(z[3 * H:])
        gates[t] = g
        cs[t + 1] = g[:H] * cs[t] + g[H:2 * H] * g[3 * H:]
        hs[t + 1] = g[2 * H:3 * H] * np.tanh(cs[t + 1])
    return hs[T].copy(), (x_seq, W, hs, cs, gates)


def lstm_backward(dh_T: np.ndarray, cache):
    """Back-propagation through time from a gradient on the last hidden state.

    Returns ``(dW, db, dx_seq)``.
    """
    x_seq, W, hs, cs, gates = cache
    T, d_in = x_seq.shape
    H = hs.shape[1]
    Wh = W[:, d_in:]
    dz = np.empty((T, 4 * H))
    dh = dh_T.copy()
    dc_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        f, i, o, g = gates[t, :H], gates[t, H:2 * H], gates[t, 2 * H:3 * H], gates[t, 3 * H:]
        tc = np.tanh(cs[t + 1])
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz[t, :H] = dc * cs[t] * f * (1.0 - f)
        dz[t, H:2 * H] = dc * g * i * (1.0 - i)
        dz[t, 2 * H:3 * H] = dh * tc * o * (1.0 - o)
        dz[t, 3 * H:] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dh = Wh.T @ dz[t]
    dW = np.hstack([dz.T @ x_seq, dz.T @ hs[:T]])
    return dW, dz.sum(axis=0), dz @ W[:, :d_in]


def dropout_mask(shape, rate: float, seed) -> np.ndarray:
    """Inverted-dropout mask: kept units carry 1/(1-rate), dropped ones 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    if rate == 0.0:
        return np.ones(shape)
    keep = np.random.default_rng(seed).random(shape) >= rate
    return keep / (1.0 - rate)


def dropout_apply(h: np.ndarray, rate: float, training: bool, seed=0) -> np.ndarray:
    if not training or rate == 0.0:
        return np.array(h, dtype=np.float64, copy=True)
    return h * dropout_mask(np.shape(h), rate, seed)


def dense_softmax(h: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Softmax of W h + b, computed with max subtraction."""
    logits = W @ h + b
    return np.exp(logits - logsumexp(logits))


def kl_loss(y: np.ndarray, y_hat: np.ndarray) -> float:
    """KL(y || y_hat) with 0 log 0 = 0."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    nz = y > 0
    return float(np.sum(y[nz] * (np.log(y[nz]) - np.log(y_hat[nz]))))


def one_hot(c: int, n: int) -> np.ndarray:
    y = np.zeros(n)
    y[c] = 1.0
    return y


def empirical_risk(labels, predictions) -> float:
    """Mean KL loss over a batch of (label, prediction) pairs."""
    losses = [kl_loss(y, p) for y, p in zip(labels, predictions)]
    return float(np.mean(losses))


# ---------------------------------------------------------------- network

@dataclass
class ForwardCache:
    conv: tuple
    conv_out_shape: tuple
    pool_arg: np.ndarray
    pooled_shape: tuple
    lstm: tuple
    mask: np.ndarray
    h_drop: np.ndarray
    probs: np.ndarray
    logits: np.ndarray = field(repr=False, default=None)


def network_forward(x: np.ndarray, params: NetworkParams, training: bool = False,
                    dropout_seed=None):
    """Class probabilities for one spectrogram; returns ``(probs, cache)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] // POOL * params.n_filters != params.input_dim:
        raise ValueError(f"spectrogram has {x.shape[0]} rows; network expects {params.n_freq}")
    conv_out, conv_cache = conv_forward(x, params["conv.filters"], params["conv.biases"])
    pooled, arg = maxpool_forward(conv_out)
    L, Fp, T = pooled.shape
    seq = pooled.transpose(2, 0, 1).reshape(T, L * Fp)
    h, lstm_cache = lstm_forward(seq, params["lstm.W"], params["lstm.b"])
    if training and params.dropout_rate > 0:
        mask = dropout_mask(h.shape, params.dropout_rate, dropout_seed)
    else:
        mask = np.ones_like(h)
    h_drop = h * mask
    logits = params["dense.W"] @ h_drop + params["dense.b"]
    probs = np.exp(logits - logsumexp(logits))
    cache = ForwardCache(conv_cache, conv_out.shape, arg, pooled.shape, lstm_cache, mask,
                         h_drop, probs, logits)
    return probs, cache


def example_loss(cache: ForwardCache, label: int) -> float:
    """-log y_hat_c computed from the logits (stable for tiny probabilities)."""
    return float(logsumexp(cache.logits) - cache.logits[label])


def network_backward(cache: ForwardCache, label: int, params: NetworkParams) -> dict:
    """Exact gradients of -log y_hat[label] for every parameter tensor."""
    d_logits = cache.probs.copy()
    d_logits[label] -= 1.0
    grads = {"dense.W": np.outer(d_logits, cache.h_drop), "dense.b": d_logits}
    dh = (params["dense.W"].T @ d_logits) * cache.mask
    dW, db, dseq = lstm_backward(dh, cache.lstm)
    grads["lstm.W"] = dW
    grads["lstm.b"] = db
    L, Fp, T = cache.pooled_shape
    d_pooled = dseq.reshape(T, L, Fp).transpose(1, 2, 0)
    d_conv = maxpool_backward(d_pooled, cache.pool_arg, cache.conv_out_shape)
    grads["conv.filters"], grads["conv.biases"] = conv_backward(d_conv, cache.conv)
    return grads


def predict_proba(params: NetworkParams, inputs) -> np.ndarray:
    """Inference-mode probabilities for a list of spectrograms, shape (n, C)."""
    return np.array([network_forward(x, params, training=False)[0] for x in inputs])


class NetworkClassifier:
    """Adapter giving trained parameters the ``predict``/``scores`` interface."""

    def __init__(self, params: NetworkParams):
        self.params = params

    def scores(self, inputs) -> np.ndarray:
        return predict_proba(self.params, inputs)

    def predict(self, inputs) -> np.ndarray:
        return np.argmax(self.scores(inputs), axis=1)


# ---------------------------------------------------------------- optimizer

@dataclass
class AdadeltaState:
    sq_grad: dict
    sq_delta: dict
    rho: float = 0.9
    epsilon: float = 1e-6

    @classmethod
    def zeros_like(cls, params: NetworkParams, rho: float = 0.9, epsilon: float = 1e-6):
        if not 0.0 < rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        return cls({k: np.zeros_like(v) for k, v in params.tensors.items()},
                   {k: np.zeros_like(v) for k, v in params.tensors.items()}, rho, epsilon)


def adadelta_step(params: NetworkParams, grads: dict, state: AdadeltaState) -> None:
    """In-place Adadelta update of `params` and `state`."""
    rho, eps = state.rho, state.epsilon
    for name, g in grads.items():
        eg = state.sq_grad[name]
        ed = state.sq_delta[name]
        eg *= rho
        eg += (1.0 - rho) * g * g
        delta = -np.sqrt(ed + eps) / np.sqrt(eg + eps) * g
        ed *= rho
        ed += (1.0 - rho) * delta * delta
        params.tensors[name] += delta


# ---------------------------------------------------------------- training

@dataclass
class TrainConfig:
    n_filters: int = 8
    filter_shape: tuple = (3, 3)
    hidden: int = 64
    dropout_rate: float = 0.4
    rho: float = 0.9
    epsilon: float = 1e-6
    patience: int = 5
    max_epochs: int = 100
    seed: int = 0


@dataclass
class EpochRecord:
    epoch: int
    train_risk: float
    val_error: float


def error_rate(params: NetworkParams, inputs, labels) -> float:
    pred = np.argmax(predict_proba(params, inputs), axis=1)
    return float(np.mean(pred != np.asarray(labels)))


def train_network(train_x, train_y, val_x, val_y, n_classes: int,
                  config: TrainConfig = TrainConfig(), init: NetworkParams | None = None):
    """Batch-size-1 Adadelta training with early stopping on validation error.

    Training stops once validation error has failed to improve for
    ``max(patience, 1)`` consecutive epochs; the parameters from the best
    epoch are returned together with the per-epoch log.
    """
    if not train_x or not val_x:
        raise ValueError("need at least one training and one validation example")
    n_freq = np.asarray(train_x[0]).shape[0]
    params = init.copy() if init is not None else init_network(
        n_freq, n_classes, config.n_filters, config.filter_shape, config.hidden,
        config.dropout_rate, config.seed)
    state = AdadeltaState.zeros_like(params, config.rho, config.epsilon)
    rng = np.random.default_rng([config.seed, 1])
    best = params.copy()
    best_err = error_rate(params, val_x, val_y)
    history = []
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_x))
        drop_seeds = rng.integers(0, 2**63 - 1, size=len(order))
        losses = np.empty(len(order))
        for step, (i, ds) in enumerate(zip(order, drop_seeds)):
            probs, cache = network_forward(train_x[i], params, training=True, dropout_seed=int(ds))
            loss = example_loss(cache, int(train_y[i]))
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, example {int(i)} (step {step})")
            losses[step] = loss
            adadelta_step(params, network_backward(cache, int(train_y[i]), params), state)
        val_err = error_rate(params, val_x, val_y)
        history.append(EpochRecord(epoch, float(losses.mean()), val_err))
        log.info("epoch %d train_risk %.4f val_error %.4f", epoch, losses.mean(), val_err)
        if val_err < best_err:
            best_err = val_err
            best = params.copy()
            stale = 0
        else:
            stale += 1
            if stale >= max(config.patience, 1):
                break
    return best, history
