"""Total-variability modelling: Baum-Welch statistics, T training, i-vectors, LDA."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .gmm import DiagonalGmm, responsibilities

RIDGE = 1e-8
IVECTOR_PRESETS = (20, 30, 40, 60, 80, 100, 200, 300)


@dataclass(frozen=True)
class BaumWelchStats:
    zeroth: np.ndarray          # (C,)
    first_centered: np.ndarray  # (C, D)

    @property
    def flat_first(self) -> np.ndarray:
        return self.first_centered.reshape(-1)


@dataclass(frozen=True)
class TotalVariabilityModel:
    m: np.ndarray       # (C*D,)
    T: np.ndarray       # (C*D, R)
    sigma: np.ndarray   # (C, D)
    objective_trace: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if self.T.shape[0] != self.m.shape[0] or self.sigma.size != self.m.shape[0]:
            raise ValueError("T, m and sigma disagree on supervector length")
        if np.any(self.sigma <= 0):
            raise ValueError("sigma must be strictly positive")

    @property
    def R(self) -> int:
        return self.T.shape[1]

    @property
    def n_components(self) -> int:
        return self.sigma.shape[0]

    def component_blocks(self) -> np.ndarray:
        """T reshaped to (C, D, R)."""
        c, d = self.sigma.shape
        return self.T.reshape(c, d, self.R)

    def precision_terms(self) -> np.ndarray:
        """T_c^t Sigma_c^-1 T_c per component, shape (C, R, R)."""
        blocks = self.component_blocks()
        return np.einsum("cdr,cd,cds->crs", blocks, 1.0 / self.sigma, blocks)


def collect_stats(ubm: DiagonalGmm, frames) -> BaumWelchStats:
    """Zeroth-order and mean-centred first-order statistics of one utterance."""
    x = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError("cannot collect statistics from an empty frame set")
    post = responsibilities(ubm, x)
    n_c = post.sum(axis=0)
    f = post.T @ x - n_c[:, None] * ubm.means
    return BaumWelchStats(n_c, f)


def posterior_precision(stats: BaumWelchStats, model: TotalVariabilityModel,
                        prec_terms=None) -> np.ndarray:
    """L = I + T^t Sigma^-1 N T."""
    prec_terms = model.precision_terms() if prec_terms is None else prec_terms
    return np.eye(model.R) + np.einsum("c,crs->rs", stats.zeroth, prec_terms)


def linear_term(stats: BaumWelchStats, model: TotalVariabilityModel) -> np.ndarray:
    """T^t Sigma^-1 f."""
    return model.T.T @ (stats.flat_first / model.sigma.reshape(-1))


def _posterior(stats, model, prec_terms):
    L = posterior_precision(stats, model, prec_terms)
    b = linear_term(stats, model)
    cho = linalg.cho_factor(L)
    mean = linalg.cho_solve(cho, b)
    return L, b, cho, mean


def tv_objective(stats_list, model: TotalVariabilityModel) -> float:
    """T-dependent part of the marginal log-likelihood of the statistics.

    Per utterance: -1/2 log|L| + 1/2 b^t L^-1 b. EM on T never decreases it.
    """
    prec_terms = model.precision_terms()
    total = 0.0
    for st in stats_list:
        L, b, cho, mean = _posterior(st, model, prec_terms)
        logdet = 2.0 * np.sum(np.log(np.diag(cho[0])))
        total += -0.5 * logdet + 0.5 * float(b @ mean)
    return total


def _ridge_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve x a = b for x, falling back to a ridge when a is singular."""
    try:
        cho = linalg.cho_factor(a)
    except linalg.LinAlgError:
        cho = linalg.cho_factor(a + RIDGE * np.eye(a.shape[0]))
    return linalg.cho_solve(cho, b.T).T


def train_total_variability(stats_list, ubm: DiagonalGmm, R: int, n_iters: int = 10,
                            seed: int = 0, init_scale: float = 0.01) -> TotalVariabilityModel:
    """EM estimate of the loading matrix T with m fixed to the UBM means."""
    stats_list = list(stats_list)
    if R < 1:
        raise ValueError("R must be at least 1")
    if len(stats_list) < R:
        raise ValueError(f"need at least R={R} utterances, got {len(stats_list)}")
    c, d = ubm.means.shape
    rng = np.random.default_rng(seed)
    model = TotalVariabilityModel(ubm.means.reshape(-1).copy(),
                                  rng.normal(0.0, init_scale, (c * d, R)), ubm.variances.copy())
    trace = []
    for _ in range(n_iters):
        prec_terms = model.precision_terms()
        acc_f = np.zeros((c, d, R))
        acc_n = np.zeros((c, R, R))
        total = 0.0
        for st in stats_list:
            L, b, cho, mean = _posterior(st, model, prec_terms)
            total += -np.sum(np.log(np.diag(cho[0]))) + 0.5 * float(b @ mean)
            second = linalg.cho_solve(cho, np.eye(R)) + np.outer(mean, mean)
            acc_f += st.first_centered[:, :, None] * mean[None, None, :]
            acc_n += st.zeroth[:, None, None] * second[None, :, :]
        trace.append(total)
        blocks = np.stack([_ridge_solve(acc_n[k], acc_f[k]) for k in range(c)])
        model = TotalVariabilityModel(model.m, blocks.reshape(c * d, R), model.sigma)
    trace.append(tv_objective(stats_list, model))
    return TotalVariabilityModel(model.m, model.T, model.sigma, tuple(trace))


@dataclass(frozen=True)
class IVector:
    w: np.ndarray


def extract_ivector(stats: BaumWelchStats, model: TotalVariabilityModel) -> IVector:
    """Posterior mean of the latent factor."""
    if stats.first_centered.shape != model.sigma.shape:
        raise ValueError(f"statistics shape {stats.first_centered.shape} does not match "
                         f"model shape {model.sigma.shape}")
    _, _, _, mean = _posterior(stats, model, model.precision_terms())
    return IVector(mean)


def extract_ivectors(stats_list, model: TotalVariabilityModel) -> np.ndarray:
    prec_terms = model.precision_terms()
    return np.array([_posterior(st, model, prec_terms)[3] for st in stats_list])


class ZeroVectorError(ValueError):
    pass


def center_length_normalize(vs, fit_mean: bool = True, mean=None):
    """Subtract a mean (fitted here or supplied) and scale rows to unit length.

    Returns ``(normalized, mean)``.
    """
    x = np.atleast_2d(np.asarray(vs, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError("empty i-vector set")
    if fit_mean:
        mean = x.mean(axis=0)
    elif mean is None:
        raise ValueError("a stored mean is required when fit_mean is false")
    centered = x - mean
    norms = np.linalg.norm(centered, axis=1)
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        raise ZeroVectorError(f"i-vector {int(bad[0])} is zero after centering")
    return centered / norms[:, None], np.asarray(mean, dtype=np.float64)


@dataclass(frozen=True)
class LdaProjection:
    basis: np.ndarray    # (R, R')
    mean: np.ndarray     # (R,)
    class_means: np.ndarray | None = None
    eigenvalues: np.ndarray | None = None

    def project(self, v) -> np.ndarray:
        return (np.asarray(v, dtype=np.float64) - self.mean) @ self.basis


def scatter_matrices(vs, labels):
    x = np.asarray(vs, dtype=np.float64)
    labels = np.asarray(labels)
    mean = x.mean(axis=0)
    dim = x.shape[1]
    s_w = np.zeros((dim, dim))
    s_b = np.zeros((dim, dim))
    classes = np.unique(labels)
    means = []
    for c in classes:
        xc = x[labels == c]
        mc = xc.mean(axis=0)
        means.append(mc)
        diff = xc - mc
        s_w += diff.T @ diff
        s_b += xc.shape[0] * np.outer(mc - mean, mc - mean)
    return s_w, s_b, mean, classes, np.array(means)


def lda_fit(vs, labels, out_dim: int) -> LdaProjection:
    """Top generalized eigenvectors of (S_b, S_w + ridge)."""
    s_w, s_b, mean, classes, means = scatter_matrices(vs, labels)
    if classes.size < 2:
        raise ValueError("LDA needs at least two classes")
    if out_dim > classes.size - 1 or out_dim < 1:
        raise ValueError(f"out_dim must lie in [1, {classes.size - 1}] for {classes.size} "
                         f"classes, got {out_dim}")
    dim = s_w.shape[0]
    ridge = 1e-6 * np.trace(s_w) / dim
    evals, evecs = linalg.eigh(s_b, s_w + ridge * np.eye(dim))
    order = np.argsort(evals)[::-1][:out_dim]
    # eigh gives B^t (S_w + ridge) B = I; rescale to unit within-class covariance
    n = np.asarray(vs).shape[0]
    basis = evecs[:, order] * np.sqrt(max(n - classes.size, 1))
    # fix the sign so the largest-magnitude loading of each axis is positive
    flip = np.sign(basis[np.argmax(np.abs(basis), axis=0), np.arange(out_dim)])
    basis = basis * flip
    return LdaProjection(basis, mean, (means - mean) @ basis, evals[order])


def lda_project(p: LdaProjection, v) -> np.ndarray:
    return p.project(v)
