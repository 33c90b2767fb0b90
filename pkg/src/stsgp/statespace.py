"""Continuous-discrete state-space models and exact Kalman/RTS inference.

Transitions and process noise are parameterized by the interval between
consecutive observations, so irregular sampling is handled exactly. The prior
state distribution is attached to ``t = 0``; the first filter step predicts
across ``t_1 - 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import CompositionError, GridError, NumericalFailure, ParameterDomainError, UnsupportedGridError
from .kernels import CyclicParams, DampedParams, LllmParams, _nonneg, as_grid, is_uniform

__all__ = [
    "StateSpaceModel",
    "FilterResult",
    "SmootherResult",
    "Forecast",
    "build_blr_ss",
    "build_lllm_ss",
    "build_llm_ss",
    "build_cyclic_ss",
    "build_damped_ss",
    "build_blr_features_ss",
    "combine_models",
    "kalman_filter",
    "rts_smoother",
    "forecast",
    "simulate",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """Linear-Gaussian model ``z_k = A(dt) z_{k-1} + q_k``, ``y_k = H z_k + eps_k``.

    ``row_fn`` overrides ``measurement_row`` for models whose observation row
    depends on time (regression on external features).
    """

    state_dim: int
    transition: Callable[[float], np.ndarray]
    process_noise: Callable[[float], np.ndarray]
    measurement_row: np.ndarray
    measurement_noise: float
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    uniform_only: bool = False
    row_fn: Optional[Callable[[float], np.ndarray]] = field(default=None, repr=False)

    def observation_row(self, t: float) -> np.ndarray:
        if self.row_fn is not None:
            return self.row_fn(t)
        return self.measurement_row

    def check_grid(self, times) -> None:
        if self.uniform_only and not is_uniform(times):
            raise UnsupportedGridError(
                "damped trend dynamics are only defined on uniform grids with t_1 equal to the spacing"
            )


@dataclass(frozen=True, eq=False)
class FilterResult:
    times: np.ndarray
    predicted_means: np.ndarray
    predicted_covs: np.ndarray
    filtered_means: np.ndarray
    filtered_covs: np.ndarray
    innovations: np.ndarray
    innovation_vars: np.ndarray
    loglik: float


@dataclass(frozen=True, eq=False)
class SmootherResult:
    times: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    @property
    def level(self) -> np.ndarray:
        """Smoothed mean of the first state component."""
        return self.means[:, 0]


@dataclass(frozen=True, eq=False)
class Forecast:
    """Predictive moments of ``y``; latent excludes measurement noise, observed includes it."""

    times: np.ndarray
    mean: np.ndarray
    var_latent: np.ndarray
    var_observed: np.ndarray


def _trend_transition(dt):
    return np.array([[1.0, dt], [0.0, 1.0]])


def build_blr_ss(m0: float, P0: float, sigma0_sq: float = 0.0) -> StateSpaceModel:
    """Regression through the origin as a two-state model with a frozen slope."""
    return build_lllm_ss(LllmParams(c0=0.0, m0=m0, K0=0.0, P0=P0, sigma0_sq=sigma0_sq))


def build_lllm_ss(params: LllmParams) -> StateSpaceModel:
    q, g = params.q0_sq, params.g0_sq
    return StateSpaceModel(
        state_dim=2,
        transition=_trend_transition,
        process_noise=lambda dt: np.diag([q * dt, g * dt]),
        measurement_row=np.array([1.0, 0.0]),
        measurement_noise=params.sigma0_sq,
        prior_mean=np.array([params.c0, params.m0]),
        prior_cov=np.diag([params.K0, params.P0]),
    )


def build_llm_ss(c0: float = 0.0, K0: float = 0.0, q0_sq: float = 0.0, sigma0_sq: float = 0.0) -> StateSpaceModel:
    return build_lllm_ss(LllmParams(c0=c0, K0=K0, q0_sq=q0_sq, sigma0_sq=sigma0_sq))


def build_cyclic_ss(params: CyclicParams) -> StateSpaceModel:
    w, g = params.omega_c, params.g0_sq

    def rotation(dt):
        c, s = math.cos(w * dt), math.sin(w * dt)
        return np.array([[c, s], [-s, c]])

    return StateSpaceModel(
        state_dim=2,
        transition=rotation,
        process_noise=lambda dt: g * dt * np.eye(2),
        measurement_row=np.array([1.0, 0.0]),
        measurement_noise=params.sigma0_sq,
        prior_mean=np.array([params.m0, params.m0]),
        prior_cov=params.P0 * np.eye(2),
    )


def build_damped_ss(params: DampedParams) -> StateSpaceModel:
    phi, q, g = params.phi, params.q0_sq, params.g0_sq
    return StateSpaceModel(
        state_dim=2,
        transition=lambda dt: np.array([[1.0, dt], [0.0, phi]]),
        process_noise=lambda dt: np.diag([q * dt, g * dt]),
        measurement_row=np.array([1.0, 0.0]),
        measurement_noise=params.sigma0_sq,
        prior_mean=np.array([params.c0, params.m0]),
        prior_cov=np.diag([params.K0, params.P0]),
        uniform_only=True,
    )


def build_blr_features_ss(z0_sq: float, feature_at: Callable[[float], np.ndarray], n_features: int) -> StateSpaceModel:
    """Constant regression weights as states; the observation row is the feature vector at ``t``."""
    _nonneg(z0_sq=z0_sq)
    if n_features < 1:
        raise ParameterDomainError("regression on features needs at least one feature")
    eye = np.eye(n_features)
    zero = np.zeros((n_features, n_features))
    return StateSpaceModel(
        state_dim=n_features,
        transition=lambda dt: eye,
        process_noise=lambda dt: zero,
        measurement_row=np.zeros(n_features),
        measurement_noise=0.0,
        prior_mean=np.zeros(n_features),
        prior_cov=z0_sq * eye,
        row_fn=lambda t: np.asarray(feature_at(t), dtype=float).reshape(n_features),
    )


def combine_models(blocks: Sequence[StateSpaceModel]) -> StateSpaceModel:
    """Stack independent models block-diagonally; their measurement noises add."""
    blocks = list(blocks)
    if not blocks:
        raise CompositionError("combine_models needs at least one block")
    if len(blocks) == 1:
        return blocks[0]

    def transition(dt):
        return scipy.linalg.block_diag(*(b.transition(dt) for b in blocks))

    def process_noise(dt):
        return scipy.linalg.block_diag(*(b.process_noise(dt) for b in blocks))

    def stacked_row(t):
        return np.concatenate([b.observation_row(t) for b in blocks])

    row_fn = stacked_row if any(b.row_fn is not None for b in blocks) else None

    return StateSpaceModel(
        state_dim=sum(b.state_dim for b in blocks),
        transition=transition,
        process_noise=process_noise,
        measurement_row=np.concatenate([b.measurement_row for b in blocks]),
        measurement_noise=float(sum(b.measurement_noise for b in blocks)),
        prior_mean=np.concatenate([b.prior_mean for b in blocks]),
        prior_cov=scipy.linalg.block_diag(*(b.prior_cov for b in blocks)),
        uniform_only=any(b.uniform_only for b in blocks),
        row_fn=row_fn,
    )


def _sym(P):
    return 0.5 * (P + P.T)


def _series_arrays(series, values=None):
    if values is None:
        times, values = series.times, series.values
    else:
        times = series
    t = as_grid(times)
    y = np.asarray(values, dtype=float)
    if y.shape != t.shape:
        raise GridError(f"{len(y)} values for {len(t)} time points")
    return t, y


def kalman_filter(model: StateSpaceModel, series, values=None) -> FilterResult:
    """Exact filtering of a scalar series; accepts a ``TimeSeries`` or ``(times, values)``.

    The log-likelihood is the sum of one-step predictive log densities. Covariance
    updates use the Joseph form.
    """
    t, y = _series_arrays(series, values)
    model.check_grid(t)
    n, d = len(t), model.state_dim
    r = float(model.measurement_noise)
    pm, pc = np.empty((n, d)), np.empty((n, d, d))
    fm, fc = np.empty((n, d)), np.empty((n, d, d))
    v_all, s_all = np.empty(n), np.empty(n)
    m, P = np.array(model.prior_mean, dtype=float), np.array(model.prior_cov, dtype=float)
    prev, loglik = 0.0, 0.0
    eye = np.eye(d)
    for k in range(n):
        dt = t[k] - prev
        A = model.transition(dt)
        m = A @ m
        P = _sym(A @ P @ A.T + model.process_noise(dt))
        pm[k], pc[k] = m, P
        h = model.observation_row(t[k])
        v = y[k] - h @ m
        Ph = P @ h
        s = float(h @ Ph + r)
        if not np.isfinite(s) or not np.isfinite(v) or s < 0:
            raise NumericalFailure(f"invalid innovation variance {s!r} at t = {t[k]!r}")
        if s == 0.0:
            # observation is a deterministic function of the state: nothing to learn
            if abs(v) > 1e-9 * max(1.0, abs(y[k])):
                raise NumericalFailure(f"zero innovation variance with residual {v!r} at t = {t[k]!r}")
        else:
            gain = Ph / s
            m = m + gain * v
            I_KH = eye - np.outer(gain, h)
            P = _sym(I_KH @ P @ I_KH.T + r * np.outer(gain, gain))
            loglik += -0.5 * (_LOG_2PI + math.log(s) + v * v / s)
        fm[k], fc[k] = m, P
        v_all[k], s_all[k] = v, s
        prev = t[k]
    return FilterResult(t, pm, pc, fm, fc, v_all, s_all, float(loglik))


def rts_smoother(model: StateSpaceModel, result: FilterResult) -> SmootherResult:
    """Rauch-Tung-Striebel backward pass over a filter result."""
    t = result.times
    n = len(t)
    ms = result.filtered_means.copy()
    Ps = result.filtered_covs.copy()
    for k in range(n - 2, -1, -1):
        A = model.transition(t[k + 1] - t[k])
        Pp = result.predicted_covs[k + 1]
        # G = P_f A^T Pp^+ ; pseudo-inverse because frozen states make Pp singular
        G = result.filtered_covs[k] @ A.T @ np.linalg.pinv(Pp, hermitian=True)
        ms[k] = result.filtered_means[k] + G @ (ms[k + 1] - result.predicted_means[k + 1])
        Ps[k] = _sym(result.filtered_covs[k] + G @ (Ps[k + 1] - Pp) @ G.T)
    if not (np.all(np.isfinite(ms)) and np.all(np.isfinite(Ps))):
        raise NumericalFailure("smoother produced non-finite moments")
    return SmootherResult(t, ms, Ps)


def forecast(model: StateSpaceModel, result: FilterResult, horizon_times) -> Forecast:
    """Prediction-only steps from the last filtered state over ``horizon_times``."""
    h_t = np.asarray(horizon_times, dtype=float).reshape(-1)
    empty = np.empty(0)
    if h_t.size == 0:
        return Forecast(empty, empty, empty, empty)
    last = result.times[-1] if len(result.times) else 0.0
    if not np.all(np.isfinite(h_t)) or h_t[0] <= last or np.any(np.diff(h_t) <= 0):
        raise GridError(f"horizon times must be strictly increasing and after the last training time {last!r}")
    model.check_grid(np.concatenate([result.times, h_t]))
    if len(result.times):
        m, P = result.filtered_means[-1].copy(), result.filtered_covs[-1].copy()
    else:
        m, P = np.array(model.prior_mean, dtype=float), np.array(model.prior_cov, dtype=float)
    n = len(h_t)
    mean, var = np.empty(n), np.empty(n)
    prev = last
    for k in range(n):
        dt = h_t[k] - prev
        A = model.transition(dt)
        m = A @ m
        P = _sym(A @ P @ A.T + model.process_noise(dt))
        h = model.observation_row(h_t[k])
        mean[k] = h @ m
        var[k] = h @ P @ h
        prev = h_t[k]
    return Forecast(h_t, mean, var, var + model.measurement_noise)


def _psd_factor(M):
    lam, V = np.linalg.eigh(_sym(M))
    lam = np.where(lam > 1e-14 * max(1.0, float(np.max(np.abs(lam), initial=0.0))), lam, 0.0)
    return V * np.sqrt(lam)


def simulate(model: StateSpaceModel, times, rng: np.random.Generator, n_paths: int = 1) -> np.ndarray:
    """Draw ``n_paths`` observation sequences by forward simulation; shape ``(n_paths, len(times))``."""
    t = as_grid(times)
    model.check_grid(t)
    d = model.state_dim
    z = model.prior_mean + rng.standard_normal((n_paths, d)) @ _psd_factor(model.prior_cov).T
    out = np.empty((n_paths, len(t)))
    prev = 0.0
    sd = math.sqrt(model.measurement_noise)
    for k, tk in enumerate(t):
        dt = tk - prev
        z = z @ model.transition(dt).T + rng.standard_normal((n_paths, d)) @ _psd_factor(model.process_noise(dt)).T
        out[:, k] = z @ model.observation_row(tk) + sd * rng.standard_normal(n_paths)
        prev = tk
    return out


def with_noise(model: StateSpaceModel, sigma0_sq: float) -> StateSpaceModel:
    _nonneg(sigma0_sq=sigma0_sq)
    return replace(model, measurement_noise=float(sigma0_sq))
