"""Diagonal-covariance GMMs: EM-trained UBM, MAP mean adaptation, supervectors."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

log = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
VARIANCE_FLOOR_RATIO = 1e-3
DEFAULT_RELEVANCE = 16.0


@dataclass(frozen=True)
class DiagonalGmm:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood_trace: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        var = np.atleast_2d(np.asarray(self.variances, dtype=np.float64))
        if mu.shape != var.shape or w.shape != (mu.shape[0],):
            raise ValueError(f"inconsistent GMM shapes: weights {w.shape}, means {mu.shape}, "
                             f"variances {var.shape}")
        if np.any(var <= 0):
            raise ValueError("variances must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_log_densities(self, x: np.ndarray) -> np.ndarray:
        """log w_c + log N(x_t; mu_c, var_c), shape (frames, components)."""
        x = np.atleast_2d(x)
        if x.shape[1] != self.dim:
            raise ValueError(f"frame dimension {x.shape[1]} does not match GMM dimension {self.dim}")
        out = np.empty((x.shape[0], self.n_components))
        log_norm = -0.5 * (self.dim * LOG_2PI + np.sum(np.log(self.variances), axis=1))
        with np.errstate(divide="ignore"):
            log_w = np.log(self.weights)
        for c in range(self.n_components):
            diff = x - self.means[c]
            out[:, c] = log_w[c] + log_norm[c] - 0.5 * np.sum(diff * diff / self.variances[c], axis=1)
        return out

    def log_likelihood(self, x: np.ndarray) -> float:
        return float(np.sum(logsumexp(self.component_log_densities(x), axis=1)))

    def sample(self, n: int, rng) -> np.ndarray:
        comps = rng.choice(self.n_components, size=n, p=self.weights)
        return self.means[comps] + rng.standard_normal((n, self.dim)) * np.sqrt(self.variances[comps])


@dataclass(frozen=True)
class Supervector:
    """Adapted means stacked component-major."""

    values: np.ndarray
    n_components: int
    dim: int

    def as_matrix(self) -> np.ndarray:
        return self.values.reshape(self.n_components, self.dim)


def responsibilities(g: DiagonalGmm, x) -> np.ndarray:
    """Posterior component probabilities for one frame or a (frames, D) batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    lp = g.component_log_densities(x)
    post = np.exp(lp - logsumexp(lp, axis=1, keepdims=True))
    return post[0] if single else post


def _kmeans_pp(x: np.ndarray, k: int, rng, n_lloyd: int = 10):
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers[j] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[j]) ** 2, axis=1))
    for _ in range(n_lloyd):
        dist = (np.sum(x * x, axis=1)[:, None] - 2.0 * x @ centers.T
                + np.sum(centers * centers, axis=1)[None, :])
        assign = np.argmin(dist, axis=1)
        for j in range(k):
            members = x[assign == j]
            if members.shape[0]:
                centers[j] = members.mean(axis=0)
    dist = (np.sum(x * x, axis=1)[:, None] - 2.0 * x @ centers.T
            + np.sum(centers * centers, axis=1)[None, :])
    return centers, np.argmin(dist, axis=1)


def em_train_gmm(frames, n_components: int, n_iters: int = 20, seed: int = 0,
                 floor_ratio: float = VARIANCE_FLOOR_RATIO) -> DiagonalGmm:
    """Fit a diagonal GMM by k-means++ initialization followed by EM.

    The returned model carries the total log-likelihood evaluated before
    every EM iteration plus once after the last one.
    """
    x = np.asarray(frames, dtype=np.float64)
    n, d = x.shape
    if n < n_components:
        raise ValueError(f"need at least {n_components} frames, got {n}")
    if n_iters < 1:
        raise ValueError("n_iters must be at least 1")
    rng = np.random.default_rng(seed)
    floor = np.maximum(floor_ratio * x.var(axis=0), 1e-12)

    centers, assign = _kmeans_pp(x, n_components, rng)
    counts = np.bincount(assign, minlength=n_components).astype(np.float64)
    variances = np.tile(x.var(axis=0), (n_components, 1))
    for j in range(n_components):
        if counts[j] > 1:
            variances[j] = x[assign == j].var(axis=0)
    weights = np.maximum(counts, 1.0)
    gmm = DiagonalGmm(weights / weights.sum(), centers, np.maximum(variances, floor))

    trace = []
    for it in range(n_iters):
        lp = gmm.component_log_densities(x)
        frame_ll = logsumexp(lp, axis=1)
        trace.append(float(np.sum(frame_ll)))
        post = np.exp(lp - frame_ll[:, None])
        occ = post.sum(axis=0)
        means = np.empty_like(gmm.means)
        variances = np.empty_like(gmm.variances)
        for c in range(n_components):
            if occ[c] <= 1e-10:
                # empty component: restart it on the worst-explained frame
                worst = int(np.argmin(frame_ll))
                log.warning("EM iteration %d: component %d empty, reinitialized", it, c)
                means[c] = x[worst]
                variances[c] = np.maximum(x.var(axis=0), floor)
                occ[c] = 1.0
                continue
            means[c] = post[:, c] @ x / occ[c]
            diff = x - means[c]
            variances[c] = np.maximum(post[:, c] @ (diff * diff) / occ[c], floor)
        gmm = DiagonalGmm(occ / occ.sum(), means, variances)
    trace.append(gmm.log_likelihood(x))
    return DiagonalGmm(gmm.weights, gmm.means, gmm.variances, tuple(trace))


def map_adapt(ubm: DiagonalGmm, frames, relevance: float = DEFAULT_RELEVANCE) -> Supervector:
    """Mean-only MAP adaptation; returns the stacked adapted means."""
    x = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError("cannot adapt to an empty frame set")
    if relevance < 0:
        raise ValueError("relevance factor must be non-negative")
    post = responsibilities(ubm, x)
    n_c = post.sum(axis=0)
    first = post.T @ x
    adapted = ubm.means.copy()
    seen = n_c > 0
    expect = first[seen] / n_c[seen, None]
    alpha = n_c[seen] / (n_c[seen] + relevance)
    adapted[seen] = alpha[:, None] * expect + (1.0 - alpha[:, None]) * ubm.means[seen]
    return Supervector(adapted.reshape(-1), ubm.n_components, ubm.dim)
