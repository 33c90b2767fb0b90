"""Exact Gaussian-process regression on top of any prior mean/covariance builder."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import GridError, NumericalFailure
from .kernels import Moments, as_grid

__all__ = ["GPPosterior", "JITTER_LADDER", "cholesky_jitter", "log_marginal_likelihood", "posterior", "sample_prior"]

JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)

PriorFn = Callable[[np.ndarray], Moments]


@dataclass(frozen=True, eq=False)
class GPPosterior:
    """Posterior of the latent signal at ``query``; ``var_observed`` adds the noise variance."""

    query: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    var_observed: np.ndarray
    log_marginal_likelihood: float

    @property
    def var_latent(self) -> np.ndarray:
        return np.diag(self.cov).copy()


def cholesky_jitter(K: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``K``, retrying with ``1e-10 s, 1e-8 s, 1e-6 s`` on the diagonal.

    ``s`` is the mean diagonal entry. Raises :class:`NumericalFailure` when the
    ladder is exhausted.
    """
    K = 0.5 * (K + K.T)
    n = K.shape[0]
    s = float(np.mean(np.diag(K))) if n else 1.0
    if not np.isfinite(s):
        raise NumericalFailure("covariance matrix has non-finite diagonal")
    s = s if s > 0 else 1.0
    for jitter in JITTER_LADDER:
        try:
            return scipy.linalg.cholesky(K + jitter * s * np.eye(n), lower=True, check_finite=True)
        except (np.linalg.LinAlgError, ValueError):
            continue
    raise NumericalFailure("Cholesky factorization failed after exhausting the jitter ladder")


def log_marginal_likelihood(mean, K, y) -> float:
    """``log N(y; mean, K)``; ``K`` must already include the noise diagonal."""
    y = np.asarray(y, dtype=float)
    mean = np.asarray(mean, dtype=float)
    K = np.asarray(K, dtype=float)
    if y.shape != mean.shape or K.shape != (len(y), len(y)):
        raise GridError(f"shape mismatch: y {y.shape}, mean {mean.shape}, K {K.shape}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(mean)) and np.all(np.isfinite(K))):
        raise NumericalFailure("non-finite input to the marginal likelihood")
    if len(y) == 0:
        return 0.0
    L = cholesky_jitter(K)
    alpha = scipy.linalg.solve_triangular(L, y - mean, lower=True)
    return float(-0.5 * alpha @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * len(y) * math.log(2 * math.pi))


def _train_arrays(train):
    if train is None:
        return np.empty(0), np.empty(0)
    if hasattr(train, "times"):
        t, y = train.times, train.values
    else:
        t, y = train
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape:
        raise GridError(f"{len(y)} values for {len(t)} time points")
    if t.size:
        as_grid(t)
    return t, y


def posterior(prior: PriorFn, train, query, noise_var: float = 0.0) -> GPPosterior:
    """Condition the latent process on noisy training data and predict at ``query``.

    ``prior(grid)`` returns signal moments without measurement noise. Cross
    covariances come from evaluating ``prior`` once on the sorted union of
    training and query times and slicing.
    """
    t, y = _train_arrays(train)
    q = np.asarray(query, dtype=float).reshape(-1)
    if q.size and np.any(q <= 0):
        raise GridError("query times must be > 0 (the prior sits at t = 0)")
    if q.size and np.any(np.diff(q) <= 0):
        raise GridError("query times must be strictly increasing")
    if q.size == 0:
        lml = _lml(prior, t, y, noise_var)
        return GPPosterior(q, np.empty(0), np.empty((0, 0)), np.empty(0), lml)

    union = np.union1d(t, q)
    mom = prior(union)
    iq = np.searchsorted(union, q)
    m_q = mom.mean[iq]
    K_qq = mom.cov[np.ix_(iq, iq)]
    if t.size == 0:
        return GPPosterior(q, m_q, K_qq, np.diag(K_qq) + noise_var, 0.0)

    it = np.searchsorted(union, t)
    K_tt = mom.cov[np.ix_(it, it)] + noise_var * np.eye(len(t))
    K_qt = mom.cov[np.ix_(iq, it)]
    resid = y - mom.mean[it]
    L = cholesky_jitter(K_tt)
    alpha = scipy.linalg.cho_solve((L, True), resid)
    V = scipy.linalg.solve_triangular(L, K_qt.T, lower=True)
    mean = m_q + K_qt @ alpha
    cov = K_qq - V.T @ V
    cov = 0.5 * (cov + cov.T)
    w = scipy.linalg.solve_triangular(L, resid, lower=True)
    lml = float(-0.5 * w @ w - np.sum(np.log(np.diag(L))) - 0.5 * len(t) * math.log(2 * math.pi))
    return GPPosterior(q, mean, cov, np.diag(cov) + noise_var, lml)


def _lml(prior, t, y, noise_var):
    if t.size == 0:
        return 0.0
    mom = prior(t)
    return log_marginal_likelihood(mom.mean, mom.cov + noise_var * np.eye(len(t)), y)


def _psd_sqrt(K):
    K = 0.5 * (K + K.T)
    lam, V = np.linalg.eigh(K)
    top = max(1.0, float(np.max(np.abs(lam), initial=0.0)))
    if lam.size and lam[0] < -1e-8 * top:
        raise NumericalFailure(f"covariance is not positive semidefinite (min eigenvalue {lam[0]:.3g})")
    # drop the rounding-level spectrum so rank-deficient priors yield exact sample paths
    cutoff = len(lam) * np.finfo(float).eps * top
    return V * np.sqrt(np.where(lam > cutoff, lam, 0.0))


def sample_prior(mean, K, n_paths: int = 1, seed=None) -> np.ndarray:
    """Draw ``n_paths`` sample paths; returns shape ``(len(mean), n_paths)``."""
    mean = np.asarray(mean, dtype=float)
    K = np.asarray(K, dtype=float)
    if K.shape != (len(mean), len(mean)):
        raise GridError("mean and covariance sizes differ")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((len(mean), n_paths))
    return mean[:, None] + _psd_sqrt(K) @ z
