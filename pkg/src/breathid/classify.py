"""Classifiers over fixed-length vectors and evaluation utilities."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

SPLIT_TAGS = ("train", "validation", "test")


class TrainingError(RuntimeError):
    pass


# ---------------------------------------------------------------- splits

@dataclass(frozen=True)
class SplitManifest:
    tags: tuple

    def indices(self, tag: str) -> np.ndarray:
        return np.array([i for i, t in enumerate(self.tags) if t == tag], dtype=np.int64)


def _split_counts(n: int, fractions) -> list:
    """Largest-remainder apportionment of n items to the given fractions."""
    raw = [f * n for f in fractions]
    counts = [int(np.floor(r)) for r in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def make_split(labels, fractions=(0.7, 0.2, 0.1), seed: int = 0) -> SplitManifest:
    """Stratified train/validation/test assignment.

    Each speaker's examples are shuffled with a seeded generator and cut
    contiguously. Two fractions mean train/test.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) == 2:
        fractions = (fractions[0], 0.0, fractions[1])
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be 2 or 3 non-negative values summing to 1, got {fractions}")
    labels = list(labels)
    groups = OrderedDict()
    for i, lab in enumerate(labels):
        groups.setdefault(lab, []).append(i)
    tags = [None] * len(labels)
    rng = np.random.default_rng(seed)
    for lab in sorted(groups, key=str):
        members = np.array(groups[lab])
        counts = _split_counts(len(members), fractions)
        for frac, cnt, tag in zip(fractions, counts, SPLIT_TAGS):
            if frac > 0 and cnt == 0:
                raise ValueError(f"speaker {lab!r} has too few examples ({len(members)}) "
                                 f"for a non-empty {tag} split")
        order = members[rng.permutation(len(members))]
        pos = 0
        for cnt, tag in zip(counts, SPLIT_TAGS):
            for i in order[pos: pos + cnt]:
                tags[int(i)] = tag
            pos += cnt
    return SplitManifest(tuple(tags))


# ---------------------------------------------------------------- SVM

@dataclass
class LinearSvm:
    """One-vs-rest linear machine; row c of `weights` scores class c."""

    weights: np.ndarray
    biases: np.ndarray
    lam: float
    objective_trace: list = field(default_factory=list, repr=False)

    def scores(self, vs) -> np.ndarray:
        vs = np.atleast_2d(np.asarray(vs, dtype=np.float64))
        return vs @ self.weights.T + self.biases

    def predict(self, vs) -> np.ndarray:
        return np.argmax(self.scores(vs), axis=1)


def svm_scores(model: LinearSvm, v) -> np.ndarray:
    return model.scores(v)


def _hinge_objective(w, b, x, s, lam):
    margins = 1.0 - s * (x @ w + b)
    return 0.5 * lam * float(w @ w) + float(np.mean(np.maximum(0.0, margins)))


def hinge_subgradient(w, b, x, s, lam):
    """Gradient of ``_hinge_objective`` in (w, b) wherever no margin equals 1 exactly."""
    active = (s * (x @ w + b) < 1.0).astype(np.float64)
    coef = -(active * s) / x.shape[0]
    return lam * w + coef @ x, float(coef.sum())


def train_linear_svm(vs, labels, C_reg: float = 1.0, epochs: int = 50, seed: int = 0,
                     n_classes: int | None = None, trace_every: int | None = None) -> LinearSvm:
    """One-vs-rest hinge-loss SVMs fitted by stochastic subgradient descent.

    Each binary problem minimizes ``lam/2 |w|^2 + mean hinge`` with
    ``lam = 1 / (C_reg * n)`` and step ``1 / (lam t)`` (Pegasos). The bias
    is carried as the weight of a constant input feature. The returned
    weights average the second half of the iterates. The primal objective
    of the current iterate is traced every `trace_every` updates (default:
    once per epoch), one list per class.
    """
    x = np.asarray(vs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n, d = x.shape
    n_classes = int(y.max()) + 1 if n_classes is None else n_classes
    if len(np.unique(y)) < 2:
        raise ValueError("need at least two classes to train an SVM")
    xa = np.hstack([x, np.ones((n, 1))])
    lam = 1.0 / (C_reg * n)
    rng = np.random.default_rng(seed)
    orders = [rng.permutation(n) for _ in range(epochs)]
    W = np.zeros((n_classes, d + 1))
    traces = []
    total = epochs * n
    avg_from = total // 2
    radius = 1.0 / np.sqrt(lam)
    trace_every = n if trace_every is None else int(trace_every)
    for c in range(n_classes):
        s = np.where(y == c, 1.0, -1.0)
        w = np.zeros(d + 1)
        w_sum = np.zeros(d + 1)
        t = 0
        trace = []
        for order in orders:
            for i in order:
                t += 1
                eta = 1.0 / (lam * t)
                active = s[i] * (xa[i] @ w) < 1.0
                w *= 1.0 - eta * lam
                if active:
                    w += eta * s[i] * xa[i]
                norm = np.sqrt(w @ w)
                if norm > radius:
                    w *= radius / norm
                if t > avg_from:
                    w_sum += w
                if t % trace_every == 0:
                    trace.append(_hinge_objective(w[:-1], w[-1], x, s, lam))
        W[c] = w_sum / max(1, total - avg_from)
        traces.append(trace)
    return LinearSvm(W[:, :-1].copy(), W[:, -1].copy(), lam, traces)


# ---------------------------------------------------------------- MLP

@dataclass
class Mlp:
    """Feed-forward classifier: ReLU hidden, optional logistic hidden, softmax out."""

    weights: list
    biases: list

    @property
    def activations(self) -> list:
        acts = ["relu", "sigmoid"][: len(self.weights) - 1]
        return acts + ["softmax"]

    def forward(self, x):
        """Return per-layer outputs; the last entry holds class probabilities."""
        return self._forward(x)[0]

    def _forward(self, x):
        outs = [np.atleast_2d(np.asarray(x, dtype=np.float64))]
        z = None
        for W, b, act in zip(self.weights, self.biases, self.activations):
            z = outs[-1] @ W.T + b
            if act == "relu":
                a = np.maximum(z, 0.0)
            elif act == "sigmoid":
                a = expit(z)
            else:
                a = np.exp(z - logsumexp(z, axis=1, keepdims=True))
            outs.append(a)
        return outs, z

    def scores(self, x) -> np.ndarray:
        return self.forward(x)[-1]

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.scores(x), axis=1)


def _nll(logits, y) -> float:
    """Mean -log softmax(logits)[y], computed from the logits."""
    n = logits.shape[0]
    return float(np.mean(logsumexp(logits, axis=1) - logits[np.arange(n), y]))


def mlp_loss(model: Mlp, x, y) -> float:
    return _nll(model._forward(x)[1], np.asarray(y, dtype=np.int64))


def mlp_gradients(model: Mlp, x, y):
    """Gradients of the mean one-hot KL loss; returns (dWs, dbs, loss)."""
    y = np.asarray(y, dtype=np.int64)
    outs, logits = model._forward(x)
    n = outs[0].shape[0]
    probs = outs[-1]
    loss = _nll(logits, y)
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    dWs, dbs = [], []
    for layer in range(len(model.weights) - 1, -1, -1):
        dWs.append(delta.T @ outs[layer])
        dbs.append(delta.sum(axis=0))
        if layer == 0:
            break
        back = delta @ model.weights[layer]
        act = model.activations[layer - 1]
        a = outs[layer]
        delta = back * (a > 0) if act == "relu" else back * a * (1.0 - a)
    return dWs[::-1], dbs[::-1], loss


def init_mlp(n_in: int, hidden, n_out: int, rng) -> Mlp:
    sizes = [n_in, *hidden, n_out]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, (fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases)


def train_mlp(vs, labels, hidden=(128,), lr: float = 0.1, momentum: float = 0.9,
              decay: float = 1e-9, batch: int = 400, epochs: int = 100, seed: int = 0,
              n_classes: int | None = None, lr_trace: list | None = None) -> Mlp:
    """Minibatch SGD with classical momentum and lr / (1 + decay * t) schedule."""
    hidden = tuple(int(h) for h in hidden)
    if len(hidden) not in (1, 2):
        raise ValueError("hidden must list one or two layer sizes")
    x = np.asarray(vs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n = x.shape[0]
    n_classes = int(y.max()) + 1 if n_classes is None else n_classes
    rng = np.random.default_rng(seed)
    model = init_mlp(x.shape[1], hidden, n_classes, rng)
    vel_w = [np.zeros_like(W) for W in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    batch = min(int(batch), n)
    t = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start: start + batch]
            dWs, dbs, loss = mlp_gradients(model, x[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch starting {start}")
            rate = lr / (1.0 + decay * t)
            if lr_trace is not None:
                lr_trace.append(rate)
            for k in range(len(model.weights)):
                vel_w[k] = momentum * vel_w[k] - rate * dWs[k]
                vel_b[k] = momentum * vel_b[k] - rate * dbs[k]
                model.weights[k] += vel_w[k]
                model.biases[k] += vel_b[k]
            t += 1
    return model


# ---------------------------------------------------------------- evaluation

def confusion_matrix(true, pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(true, dtype=np.int64), np.asarray(pred, dtype=np.int64)), 1)
    return cm


def evaluate(model, inputs, labels, n_classes: int | None = None):
    """Accuracy and confusion matrix (rows true, columns predicted).

    `model` is anything with a ``predict`` method, or a plain callable.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("cannot evaluate on an empty set")
    predict = model.predict if hasattr(model, "predict") else model
    pred = np.asarray(predict(inputs), dtype=np.int64)
    if n_classes is None:
        n_classes = int(max(labels.max(), pred.max())) + 1
    cm = confusion_matrix(labels, pred, n_classes)
    return float(np.mean(pred == labels)), cm


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


def roc_auc(scores, positives) -> RocCurve:
    """Threshold sweep from high to low score; tied scores form one point.

    The area is accumulated in integer units so that it agrees exactly
    with pair counting.
    """
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positives, dtype=bool)
    n_pos = int(pos.sum())
    n_neg = int(pos.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError(f"need both classes, got {n_pos} positives and {n_neg} negatives")
    order = np.argsort(-scores, kind="mergesort")
    s_sorted = scores[order]
    p_sorted = pos[order]
    # last index of each run of equal scores
    ends = np.flatnonzero(np.append(s_sorted[1:] != s_sorted[:-1], True))
    tp = np.concatenate([[0], np.cumsum(p_sorted)[ends]]).astype(np.int64)
    fp = np.concatenate([[0], np.cumsum(~p_sorted)[ends]]).astype(np.int64)
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    thresholds = np.concatenate([[np.inf], s_sorted[ends]])
    return RocCurve(thresholds, fp / n_neg, tp / n_pos, twice_area / (2 * n_pos * n_neg))


def mann_whitney_auc(scores, positives) -> float:
    """Probability that a random positive outscores a random negative (ties 1/2)."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(positives, dtype=bool)
    sp, sn = scores[pos], scores[~pos]
    greater = int(np.sum(sp[:, None] > sn[None, :]))
    ties = int(np.sum(sp[:, None] == sn[None, :]))
    return (2 * greater + ties) / (2 * sp.size * sn.size)


def verification_aucs(scores: np.ndarray, labels, n_classes: int) -> np.ndarray:
    """Per-speaker AUC, using column c of `scores` as the target-c score."""
    labels = np.asarray(labels)
    out = np.full(n_classes, np.nan)
    for c in range(n_classes):
        pos = labels == c
        if pos.any() and (~pos).any():
            out[c] = roc_auc(scores[:, c], pos).auc
    return out
