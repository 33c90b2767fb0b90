"""Closed-form prior means and covariance matrices of structural time-series models.

Every state-space-derived builder treats the prior state as living at ``t = 0``,
so grids must be strictly positive. The matrices are assembled from the
interval matrix ``T`` (entry ``(r, c)`` is the time elapsed from ``t_c`` to
``t_r`` for ``r > c``) on the grid extended with that origin; the row and column
belonging to the origin are discarded at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CompositionError, GridError, ParameterDomainError, UnsupportedGridError

__all__ = [
    "Moments",
    "LllmParams",
    "CyclicParams",
    "DampedParams",
    "BlrFeaturesParams",
    "StationaryKernelParams",
    "as_grid",
    "is_uniform",
    "blr_kernel",
    "lllm_kernel",
    "llm_kernel",
    "cyclic_kernel",
    "damped_trend_kernel",
    "blr_features_kernel",
    "exponential_kernel",
    "damped_cosine_kernel",
    "std_periodic_kernel",
    "stationary_kernel",
    "white_noise_kernel",
    "sum_kernel",
    "product_kernel",
    "min_eigenvalue_ok",
]

# beyond this many decades the phi^-c factor of the damped product risks overflow
_MAX_DAMPING_DECADES = 150.0


@dataclass(frozen=True, eq=False)
class Moments:
    """Prior mean vector and covariance matrix evaluated on ``grid``."""

    grid: np.ndarray
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        n = len(self.grid)
        if self.mean.shape != (n,) or self.cov.shape != (n, n):
            raise CompositionError(
                f"moment shapes {self.mean.shape}, {self.cov.shape} do not match grid of length {n}"
            )


def _nonneg(**values):
    for name, v in values.items():
        if not np.isfinite(v) or v < 0:
            raise ParameterDomainError(f"{name} must be a finite non-negative number, got {v!r}")


def _finite(**values):
    for name, v in values.items():
        if not np.isfinite(v):
            raise ParameterDomainError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class LllmParams:
    """Local linear trend: level/slope prior and diffusion intensities."""

    c0: float = 0.0
    m0: float = 0.0
    K0: float = 0.0
    P0: float = 0.0
    q0_sq: float = 0.0
    g0_sq: float = 0.0
    sigma0_sq: float = 0.0

    def __post_init__(self):
        _finite(c0=self.c0, m0=self.m0)
        _nonneg(K0=self.K0, P0=self.P0, q0_sq=self.q0_sq, g0_sq=self.g0_sq, sigma0_sq=self.sigma0_sq)


@dataclass(frozen=True)
class CyclicParams:
    omega_c: float
    m0: float = 0.0
    P0: float = 0.0
    g0_sq: float = 0.0
    sigma0_sq: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.omega_c) or self.omega_c <= 0:
            raise ParameterDomainError(f"omega_c must be positive, got {self.omega_c!r}")
        _finite(m0=self.m0)
        _nonneg(P0=self.P0, g0_sq=self.g0_sq, sigma0_sq=self.sigma0_sq)


@dataclass(frozen=True)
class DampedParams(LllmParams):
    phi: float = 0.5

    def __post_init__(self):
        super().__post_init__()
        if not (0.0 < self.phi < 1.0):
            raise ParameterDomainError(f"damping factor phi must satisfy 0 < phi < 1, got {self.phi!r}")


@dataclass(frozen=True, eq=False)
class BlrFeaturesParams:
    """Regression on external features with an isotropic weight prior ``N(0, z0_sq I)``."""

    z0_sq: float
    feature_matrix: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))

    def __post_init__(self):
        _nonneg(z0_sq=self.z0_sq)
        Z = np.atleast_2d(np.asarray(self.feature_matrix, dtype=float))
        if Z.size == 0:
            raise ParameterDomainError("feature matrix is empty")
        if not np.all(np.isfinite(Z)):
            raise ParameterDomainError("feature matrix contains non-finite entries")
        object.__setattr__(self, "feature_matrix", Z)


@dataclass(frozen=True)
class StationaryKernelParams:
    """Parameters of the stationary kernels; unused fields are ignored per variant."""

    variant: str
    C: float = 1.0
    alpha: float = 1.0
    alpha1: float = 1.0
    psi: float = 0.0
    omega_c: float = 1.0

    def __post_init__(self):
        if self.variant not in ("exponential", "damped_cosine", "std_periodic"):
            raise ParameterDomainError(f"unknown stationary kernel variant {self.variant!r}")
        _nonneg(C=self.C)
        if self.variant in ("exponential", "damped_cosine") and not (np.isfinite(self.alpha) and self.alpha > 0):
            raise ParameterDomainError(f"decay rate alpha must be positive, got {self.alpha!r}")
        if self.variant == "damped_cosine":
            if not (np.isfinite(self.alpha1) and self.alpha1 > 0):
                raise ParameterDomainError(f"oscillation rate alpha1 must be positive, got {self.alpha1!r}")
            _finite(psi=self.psi)
            bound = math.atan(self.alpha / self.alpha1)
            if abs(self.psi) > bound * (1 + 1e-12):
                raise ParameterDomainError(
                    f"|psi| = {abs(self.psi):.6g} exceeds atan(alpha/alpha1) = {bound:.6g}; kernel would not be PSD"
                )
        if self.variant == "std_periodic" and not (np.isfinite(self.omega_c) and self.omega_c > 0):
            raise ParameterDomainError(f"omega_c must be positive, got {self.omega_c!r}")


def as_grid(times: Sequence[float]) -> np.ndarray:
    """Validate and return ``times`` as a float array (finite, > 0, strictly increasing)."""
    t = np.asarray(times, dtype=float)
    if t.ndim != 1:
        raise GridError(f"time grid must be one-dimensional, got shape {t.shape}")
    if not np.all(np.isfinite(t)):
        raise GridError("time grid contains non-finite values")
    if t.size and t[0] <= 0:
        raise GridError(f"time points must be > 0 (the prior sits at t = 0), got {t[0]!r}")
    if t.size > 1 and np.any(np.diff(t) <= 0):
        i = int(np.argmax(np.diff(t) <= 0)) + 1
        raise GridError(f"time grid must be strictly increasing; violated at index {i} (t = {t[i]!r})")
    return t


def is_uniform(times, rtol: float = 1e-9) -> bool:
    """True when every interval, including the first one from ``t = 0``, is the same."""
    dt = np.diff(np.concatenate([[0.0], np.asarray(times, dtype=float)]))
    if dt.size == 0:
        return True
    return bool(np.all(np.abs(dt - dt[0]) <= rtol * abs(dt[0])))


def _intervals(t: np.ndarray):
    ext = np.concatenate([[0.0], t])
    T = np.tril(ext[:, None] - ext[None, :])
    return ext, np.diff(ext), T


def _slope_scales(P0, g0_sq, dt):
    return np.concatenate([[P0], g0_sq * dt])


def _sandwich(T, d):
    # T diag(d) T^T with the origin row/column dropped
    M = (T * d) @ T.T
    return M[1:, 1:]


def _finish(t, mean, cov, sigma0_sq=0.0):
    cov = 0.5 * (cov + cov.T)
    if sigma0_sq:
        cov = cov + sigma0_sq * np.eye(len(t))
    return Moments(t, mean, cov)


def blr_kernel(grid, m0: float, P0: float, sigma0_sq: float = 0.0) -> Moments:
    """Bayesian linear regression through the origin: ``m0 t`` and ``P0 t t^T + sigma0_sq I``."""
    t = as_grid(grid)
    _finite(m0=m0)
    _nonneg(P0=P0, sigma0_sq=sigma0_sq)
    return _finish(t, m0 * t, P0 * np.outer(t, t), sigma0_sq)


def _wiener_part(t, K0, q0_sq):
    return K0 + q0_sq * np.minimum.outer(t, t)


def lllm_kernel(grid, params: LllmParams) -> Moments:
    """Local linear trend kernel.

    The covariance splits into a level part ``K0 + q0_sq min(t_i, t_j)`` and a
    slope part ``T D T^T`` with ``D = diag(P0, g0_sq dt_0, g0_sq dt_1, ...)``.
    """
    t = as_grid(grid)
    _, dt, T = _intervals(t)
    cov = _wiener_part(t, params.K0, params.q0_sq)
    cov = cov + _sandwich(T, _slope_scales(params.P0, params.g0_sq, dt))
    mean = params.c0 + params.m0 * t
    return _finish(t, mean, cov, params.sigma0_sq)


def llm_kernel(grid, c0: float = 0.0, K0: float = 0.0, q0_sq: float = 0.0, sigma0_sq: float = 0.0) -> Moments:
    """Local level model: the local linear trend with slope prior and slope noise switched off."""
    return lllm_kernel(grid, LllmParams(c0=c0, K0=K0, q0_sq=q0_sq, sigma0_sq=sigma0_sq))


def cyclic_kernel(grid, params: CyclicParams) -> Moments:
    t = as_grid(grid)
    _, dt, T = _intervals(t)
    d = _slope_scales(params.P0, params.g0_sq, dt)
    wT = params.omega_c * T
    # elementwise cos/sin first, then keep the lower triangle including the diagonal
    Lc = np.tril(np.cos(wT))
    Ls = np.tril(np.sin(wT))
    cov = _sandwich(Lc, d) + _sandwich(Ls, d)
    wt = params.omega_c * t
    mean = params.m0 * (np.cos(wt) + np.sin(wt))
    return _finish(t, mean, cov, params.sigma0_sq)


def _damped_T(ext, dt, phi):
    n = len(ext)
    k = np.arange(n)
    if (n - 1) * -math.log10(phi) <= _MAX_DAMPING_DECADES:
        # phi powers (column k carries phi^(k-1), diagonal included)
        F1 = np.tril(np.broadcast_to(np.concatenate([[0.0], phi ** k[:-1]]), (n, n)))
        # interval of the step entering row k, repeated left of the diagonal
        F2 = np.tril(np.broadcast_to(np.concatenate([[0.0], dt])[:, None], (n, n)), -1)
        F3 = phi ** (-k.astype(float))
        return (F1 @ F2) * F3
    # tiny phi: accumulate phi^(k-1-c) directly so nothing overflows
    T = np.zeros((n, n))
    for c in range(n - 1):
        steps = np.arange(c + 1, n)
        T[c + 1:, c] = np.cumsum(dt[steps - 1] * phi ** (steps - 1 - c))
    return T


def damped_trend_kernel(grid, params: DampedParams) -> Moments:
    """Damped trend kernel; the slope is multiplied by ``phi`` once per step.

    Only defined for uniformly spaced grids whose first point is one step after
    the origin, since the damping does not scale with the interval length.
    """
    t = as_grid(grid)
    if not is_uniform(t):
        raise UnsupportedGridError(
            "damped trend kernel requires a uniform grid with t_1 equal to the spacing (intervals measured from t = 0)"
        )
    ext, dt, _ = _intervals(t)
    T = _damped_T(ext, dt, params.phi)
    cov = _wiener_part(t, params.K0, params.q0_sq)
    cov = cov + _sandwich(T, _slope_scales(params.P0, params.g0_sq, dt))
    mean = params.c0 + params.m0 * T[1:, 0]
    return _finish(t, mean, cov, params.sigma0_sq)


def blr_features_kernel(params: BlrFeaturesParams, grid=None) -> Moments:
    """Zero-mean covariance ``z0_sq Z Z^T`` of a linear map of external features (no noise term)."""
    Z = params.feature_matrix
    if grid is None:
        grid = np.arange(1.0, Z.shape[0] + 1)
    t = as_grid(grid)
    if Z.shape[0] != len(t):
        raise ParameterDomainError(f"feature matrix has {Z.shape[0]} rows but the grid has {len(t)} points")
    return _finish(t, np.zeros(len(t)), params.z0_sq * Z @ Z.T)


def _lags(t):
    return np.abs(t[:, None] - t[None, :])


def exponential_kernel(grid, C: float = 1.0, alpha: float = 1.0) -> Moments:
    p = StationaryKernelParams("exponential", C=C, alpha=alpha)
    t = as_grid(grid)
    return Moments(t, np.zeros(len(t)), p.C * np.exp(-p.alpha * _lags(t)))


def damped_cosine_kernel(grid, C: float = 1.0, alpha: float = 1.0, alpha1: float = 1.0, psi: float = 0.0) -> Moments:
    """``C exp(-alpha |tau|) cos(alpha1 |tau| - psi)`` with ``|psi| <= atan(alpha / alpha1)``."""
    p = StationaryKernelParams("damped_cosine", C=C, alpha=alpha, alpha1=alpha1, psi=psi)
    t = as_grid(grid)
    tau = _lags(t)
    return Moments(t, np.zeros(len(t)), p.C * np.exp(-p.alpha * tau) * np.cos(p.alpha1 * tau - p.psi))


def std_periodic_kernel(grid, omega_c: float = 1.0, C: float = 1.0) -> Moments:
    p = StationaryKernelParams("std_periodic", C=C, omega_c=omega_c)
    t = as_grid(grid)
    tau = t[:, None] - t[None, :]
    return Moments(t, np.zeros(len(t)), p.C * np.exp(-np.sin(0.5 * p.omega_c * tau) ** 2))


def stationary_kernel(grid, params: StationaryKernelParams) -> Moments:
    if params.variant == "exponential":
        return exponential_kernel(grid, params.C, params.alpha)
    if params.variant == "damped_cosine":
        return damped_cosine_kernel(grid, params.C, params.alpha, params.alpha1, params.psi)
    return std_periodic_kernel(grid, params.omega_c, params.C)


def white_noise_kernel(grid, sigma0_sq: float) -> Moments:
    t = as_grid(grid)
    _nonneg(sigma0_sq=sigma0_sq)
    return Moments(t, np.zeros(len(t)), sigma0_sq * np.eye(len(t)))


def _common_grid(parts):
    if not parts:
        raise CompositionError("cannot combine an empty list of kernels")
    grid = parts[0].grid
    for p in parts[1:]:
        if p.grid.shape != grid.shape or not np.array_equal(p.grid, grid):
            raise CompositionError("all kernel parts must be evaluated on the same grid")
    return grid


def sum_kernel(parts: Sequence[Moments]) -> Moments:
    """Independent additive components: means add, covariances add."""
    grid = _common_grid(parts)
    mean = np.sum([p.mean for p in parts], axis=0)
    cov = np.sum([p.cov for p in parts], axis=0)
    return Moments(grid, mean, cov)


def product_kernel(parts: Sequence[Moments]) -> Moments:
    """Elementwise product of covariances; the product process has zero mean."""
    grid = _common_grid(parts)
    cov = np.prod([p.cov for p in parts], axis=0)
    return Moments(grid, np.zeros(len(grid)), cov)


def min_eigenvalue_ok(cov: np.ndarray, rtol: float = 1e-8) -> bool:
    """PSD check used throughout the tests: ``lambda_min >= -rtol * max(1, max diag)``."""
    sym = 0.5 * (cov + cov.T)
    if sym.size == 0:
        return True
    lam = np.linalg.eigvalsh(sym)[0]
    return bool(lam >= -rtol * max(1.0, float(np.max(np.diag(sym)))))
