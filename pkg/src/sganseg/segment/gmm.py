"""Diagonal-covariance Gaussian mixtures fitted by k-means++ seeded EM."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from ..errors import ParameterError

log = logging.getLogger(__name__)

VAR_FLOOR = 1e-6


@dataclass
class GmmModel:
    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, D)
    variances: np.ndarray  # (K, D)
    log_likelihoods: list[float] = field(default_factory=list)

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def component_log_pdf(self, x: np.ndarray) -> np.ndarray:
        """(N, K) array of log(weight_k * N(x | mean_k, var_k))."""
        x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
        diff2 = (x[:, None, :] - self.means[None]) ** 2 / self.variances[None]
        log_norm = -0.5 * np.sum(np.log(2 * np.pi * self.variances), axis=1)
        with np.errstate(divide="ignore"):
            log_w = np.log(self.weights)
        return log_w[None] + log_norm[None] - 0.5 * diff2.sum(axis=2)

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        return logsumexp(self.component_log_pdf(x), axis=1)

    def log_likelihood(self, x: np.ndarray) -> float:
        return float(self.log_pdf(x).sum())


def kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = [x[rng.integers(n)]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _m_step(x: np.ndarray, resp: np.ndarray, prev: GmmModel | None) -> GmmModel:
    nk = resp.sum(axis=0)
    k, d = resp.shape[1], x.shape[1]
    means = np.zeros((k, d)) if prev is None else prev.means.copy()
    variances = np.ones((k, d)) if prev is None else prev.variances.copy()
    live = nk > 0
    means[live] = (resp[:, live].T @ x) / nk[live, None]
    for j in np.flatnonzero(live):
        variances[j] = (resp[:, j] @ (x - means[j]) ** 2) / nk[j]
    variances = np.maximum(variances, VAR_FLOOR)
    return GmmModel(nk / nk.sum(), means, variances)


def fit_gmm(samples, k: int = 5, iters: int = 10, seed=0, tol: float = 0.0) -> GmmModel:
    """Fit a ``k``-component diagonal GMM.

    Components are seeded by k-means++ and a hard nearest-centre assignment,
    then refined by ``iters`` EM iterations (stopping early when the
    log-likelihood gain drops to ``tol`` or below).  The log-likelihood before
    the first and after every iteration is kept in ``log_likelihoods``.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if len(x) == 0:
        raise ParameterError("cannot fit a GMM to zero samples")
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if len(x) < k:
        log.info("reducing GMM components from %d to %d (sample count)", k, len(x))
        k = len(x)
    rng = np.random.default_rng(seed)
    centers = kmeans_pp(x, k, rng)
    nearest = ((x[:, None, :] - centers[None]) ** 2).sum(axis=2).argmin(axis=1)
    resp = np.zeros((len(x), k))
    resp[np.arange(len(x)), nearest] = 1.0
    model = _m_step(x, resp, None)
    lls = []
    for _ in range(iters):
        comp = model.component_log_pdf(x)
        norm = logsumexp(comp, axis=1, keepdims=True)
        lls.append(float(norm.sum()))
        if len(lls) > 1 and lls[-1] - lls[-2] <= tol and tol > 0:
            break
        resp = np.exp(comp - norm)
        model = _m_step(x, resp, model)
    lls.append(model.log_likelihood(x))
    model.log_likelihoods = lls
    return model
