"""Reference moments of observations obtained by brute-force propagation.

Nothing here relies on ``A(a) A(b) = A(a + b)``: transition matrices are
multiplied step by step, so the same code covers the damped trend. These
routines are deliberately simple and slow; they exist to check the closed-form
kernels.
"""

from __future__ import annotations

import numpy as np

from .errors import CompositionError, ParameterDomainError
from .kernels import Moments, as_grid
from .statespace import StateSpaceModel

__all__ = ["exact_covariance", "block_propagator_covariance", "monte_carlo_covariance"]

ExactMoments = Moments


def _rows(model, t):
    H = np.array([model.observation_row(tk) for tk in t], dtype=float).reshape(len(t), -1)
    if H.shape[1] != model.state_dim:
        raise CompositionError(f"measurement row has {H.shape[1]} entries, state has {model.state_dim}")
    return H


def exact_covariance(model: StateSpaceModel, grid) -> Moments:
    """Mean and covariance of ``y`` on ``grid`` by direct moment recursion.

    ``m_k = A m_{k-1}``, ``P_k = A P_{k-1} A^T + Q`` and
    ``Cov[z_k, z_j] = P_k A_{k+1}^T ... A_j^T`` for ``j > k``.
    """
    t = as_grid(grid)
    n, d = len(t), model.state_dim
    m0 = np.asarray(model.prior_mean, dtype=float)
    P0 = np.asarray(model.prior_cov, dtype=float)
    if m0.shape != (d,) or P0.shape != (d, d):
        raise CompositionError("prior moments do not match the state dimension")
    H = _rows(model, t)
    steps = np.diff(np.concatenate([[0.0], t]))
    A = [np.asarray(model.transition(dt), dtype=float) for dt in steps]
    Q = [np.asarray(model.process_noise(dt), dtype=float) for dt in steps]

    means = np.empty((n, d))
    marg = np.empty((n, d, d))
    m, P = m0, P0
    for k in range(n):
        m = A[k] @ m
        P = A[k] @ P @ A[k].T + Q[k]
        means[k], marg[k] = m, P

    cov = np.empty((n, n))
    for k in range(n):
        C = marg[k]
        cov[k, k] = H[k] @ C @ H[k]
        for j in range(k + 1, n):
            C = C @ A[j].T
            cov[k, j] = cov[j, k] = H[k] @ C @ H[j]
    cov += model.measurement_noise * np.eye(n)
    mean = np.einsum("kd,kd->k", H, means)
    return Moments(t, mean, cov)


def block_propagator_covariance(model: StateSpaceModel, grid) -> Moments:
    """Covariance assembled as ``P D0 P^T`` from a block lower-triangular propagator.

    Block ``(r, c)`` of the propagator is ``A(t_r - t_c)``, i.e. one transition
    over the whole elapsed time; this is only valid for dynamics with the
    semigroup property (trend and rotation, not the damped trend). The origin
    block row/column is dropped and the observed rows are kept.
    """
    t = as_grid(grid)
    if model.uniform_only:
        raise ParameterDomainError("the single-jump propagator does not apply to damped dynamics")
    d, n = model.state_dim, len(t)
    ext = np.concatenate([[0.0], t])
    steps = np.diff(ext)
    prop = np.zeros(((n + 1) * d, (n + 1) * d))
    for r in range(n + 1):
        for c in range(r + 1):
            prop[r * d:(r + 1) * d, c * d:(c + 1) * d] = model.transition(ext[r] - ext[c])
    D0 = np.zeros_like(prop)
    D0[:d, :d] = model.prior_cov
    for c in range(1, n + 1):
        D0[c * d:(c + 1) * d, c * d:(c + 1) * d] = model.process_noise(steps[c - 1])
    full = prop @ D0 @ prop.T
    H = _rows(model, t)
    Hbig = np.zeros((n, (n + 1) * d))
    for k in range(n):
        Hbig[k, (k + 1) * d:(k + 2) * d] = H[k]
    cov = Hbig @ full @ Hbig.T + model.measurement_noise * np.eye(n)
    z_mean = prop[:, :d] @ np.asarray(model.prior_mean, dtype=float)
    return Moments(t, Hbig @ z_mean, 0.5 * (cov + cov.T))


def _sqrt_psd(M):
    lam, V = np.linalg.eigh(0.5 * (M + M.T))
    return V * np.sqrt(np.clip(lam, 0.0, None))


def monte_carlo_covariance(model: StateSpaceModel, grid, n_samples: int = 200_000, seed: int = 0) -> Moments:
    """Sample-path estimate of the observation moments; reproducible for a given seed."""
    if n_samples < 1000:
        raise ParameterDomainError(f"n_samples must be at least 1000, got {n_samples}")
    t = as_grid(grid)
    rng = np.random.default_rng(seed)
    d = model.state_dim
    H = _rows(model, t)
    z = np.asarray(model.prior_mean, dtype=float) + rng.standard_normal((n_samples, d)) @ _sqrt_psd(
        np.asarray(model.prior_cov, dtype=float)).T
    y = np.empty((n_samples, len(t)))
    prev = 0.0
    sd = np.sqrt(model.measurement_noise)
    for k, tk in enumerate(t):
        dt = tk - prev
        z = z @ np.asarray(model.transition(dt)).T
        z = z + rng.standard_normal((n_samples, d)) @ _sqrt_psd(np.asarray(model.process_noise(dt))).T
        y[:, k] = z @ H[k] + sd * rng.standard_normal(n_samples)
        prev = tk
    # shift by the first path before centering so identical paths give exactly zero
    shifted = y - y[0]
    mean_shift = shifted.mean(axis=0)
    dev = shifted - mean_shift
    cov = dev.T @ dev / (n_samples - 1)
    return Moments(t, mean_shift + y[0], 0.5 * (cov + cov.T))
