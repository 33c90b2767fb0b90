"""Type-II maximum likelihood for model hyperparameters.

Each free parameter is mapped to an unconstrained coordinate (log for
positive quantities, logit for the damping factor, identity for means and
phases). The negative log marginal likelihood is minimized with L-BFGS-B using
central finite-difference gradients, from several random starting points; the
restart with the highest likelihood wins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
import scipy.optimize

from .errors import OptimizationFailure, StsError
from .gp import log_marginal_likelihood
from .model import Covariates, ModelSpec

__all__ = ["ParamSpec", "RestartTrace", "FitResult", "Objective", "neg_mll_objective", "fit", "param_spec"]

FD_STEP = 1e-5
GTOL = 1e-6
MAX_ITER = 200


@dataclass(frozen=True)
class ParamSpec:
    """How one free parameter is transformed, bounded and initialized."""

    name: str
    transform: str  # "log" | "logit" | "identity"
    init_low: Optional[float] = None
    init_high: Optional[float] = None
    init_scale: str = "log"  # "log" | "linear" | "logit" | "fixed"
    bounds: tuple = (None, None)

    def to_transformed(self, x: float) -> float:
        if self.transform == "log":
            return math.log(x)
        if self.transform == "logit":
            return math.log(x) - math.log1p(-x)
        return float(x)

    def to_natural(self, u: float) -> float:
        if self.transform == "log":
            return math.exp(u)
        if self.transform == "logit":
            return 1.0 / (1.0 + math.exp(-u)) if u >= 0 else math.exp(u) / (1.0 + math.exp(u))
        return float(u)

    def sample(self, rng: np.random.Generator, current: float) -> float:
        """Initial point in transformed coordinates."""
        if self.init_scale == "log":
            return rng.uniform(math.log(self.init_low), math.log(self.init_high))
        if self.init_scale == "linear":
            return self.to_transformed(rng.uniform(self.init_low, self.init_high))
        if self.init_scale == "logit":
            return rng.uniform(self.init_low, self.init_high)
        return self.to_transformed(current)


_LOG_BOUND = (math.log(1e-10), math.log(1e10))


def _nyquist(times) -> float:
    """Highest angular frequency identifiable from the finest sampling interval."""
    steps = np.diff(np.concatenate([[0.0], np.asarray(times, dtype=float)]))
    return math.pi / float(np.min(steps)) if steps.size else math.inf


def param_spec(name: str, kind: str, nyquist: float = math.inf) -> ParamSpec:
    if kind == "variance":
        return ParamSpec(name, "log", 1e-2, 1e1, "log", _LOG_BOUND)
    if kind == "rate":
        return ParamSpec(name, "log", 1e-2, 1e1, "log", (math.log(1e-6), math.log(1e6)))
    if kind == "frequency":
        # above the Nyquist frequency a rotation aliases to a lower one on uniform grids
        high = min(1e4, nyquist)
        init_high = min(5.0, 0.95 * high)
        init_low = min(0.1, 0.5 * init_high)
        return ParamSpec(name, "log", init_low, init_high, "linear", (math.log(1e-4), math.log(high)))
    if kind == "damping":
        return ParamSpec(name, "logit", -4.0, 4.0, "logit", (-30.0, 30.0))
    return ParamSpec(name, "identity", init_scale="fixed")


class Objective:
    """Negative log marginal likelihood over the transformed free parameters.

    Any failure (domain error, Cholesky breakdown, non-finite value) evaluates
    to ``+inf``.
    """

    def __init__(self, model: ModelSpec, series, covariates: Optional[Covariates] = None):
        self.model = model
        self.times = np.asarray(series.times if hasattr(series, "times") else series[0], dtype=float)
        self.y = np.asarray(series.values if hasattr(series, "values") else series[1], dtype=float)
        self.covariates = covariates
        nyquist = _nyquist(self.times)
        self.specs = [param_spec(k, kind, nyquist) for k, kind, _, fixed in model.parameters() if not fixed]
        self._base = model.values()

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.specs]

    def natural(self, u) -> dict[str, float]:
        values = dict(self._base)
        for s, ui in zip(self.specs, u):
            values[s.name] = s.to_natural(float(ui))
        return values

    def transformed(self, values: Mapping[str, float]) -> np.ndarray:
        return np.array([s.to_transformed(values[s.name]) for s in self.specs])

    def mll(self, values: Mapping[str, float]) -> float:
        try:
            spec = self.model.with_values(values)
            mom = spec.observed(self.times, self.covariates)
            val = log_marginal_likelihood(mom.mean, mom.cov, self.y)
        except (StsError, ValueError, FloatingPointError, OverflowError):
            return -math.inf
        return val if math.isfinite(val) else -math.inf

    def __call__(self, u) -> float:
        try:
            values = self.natural(u)
        except OverflowError:
            return math.inf
        return -self.mll(values)

    def gradient(self, u, step: float = FD_STEP) -> np.ndarray:
        """Central differences; one-sided where a neighbour is infeasible."""
        u = np.asarray(u, dtype=float)
        f0 = None
        g = np.zeros(len(u))
        for i in range(len(u)):
            e = np.zeros(len(u))
            e[i] = step
            fp, fm = self(u + e), self(u - e)
            if math.isfinite(fp) and math.isfinite(fm):
                g[i] = (fp - fm) / (2 * step)
                continue
            if f0 is None:
                f0 = self(u)
            if not math.isfinite(f0):
                continue
            if math.isfinite(fp):
                g[i] = (fp - f0) / step
            elif math.isfinite(fm):
                g[i] = (f0 - fm) / step
        return g


def neg_mll_objective(model: ModelSpec, series, covariates: Optional[Covariates] = None) -> Objective:
    return Objective(model, series, covariates)


@dataclass(frozen=True)
class RestartTrace:
    initial: dict
    final: dict
    mll: float
    converged: bool
    n_iter: int
    message: str = ""


@dataclass(frozen=True, eq=False)
class FitResult:
    params: dict
    mll: float
    model: ModelSpec
    restarts: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "params": dict(sorted(self.params.items())),
            "mll": self.mll,
            "model": self.model.to_dict(),
            "restarts": [
                {"initial": dict(sorted(r.initial.items())), "final": dict(sorted(r.final.items())),
                 "mll": r.mll, "converged": r.converged, "n_iter": r.n_iter, "message": r.message}
                for r in self.restarts
            ],
        }


def _run_restart(obj: Objective, u0: np.ndarray) -> tuple[np.ndarray, float, bool, int, str]:
    if not math.isfinite(obj(u0)):
        return u0, math.inf, False, 0, "infeasible starting point"
    bounds = [s.bounds for s in obj.specs]
    u0 = np.array([np.clip(x, lo if lo is not None else -np.inf, hi if hi is not None else np.inf)
                   for x, (lo, hi) in zip(u0, bounds)])
    res = scipy.optimize.minimize(
        obj, u0, jac=obj.gradient, method="L-BFGS-B", bounds=bounds,
        options={"maxiter": MAX_ITER, "gtol": GTOL, "ftol": 0.0},
    )
    f = float(res.fun)
    return np.asarray(res.x), f, bool(res.success), int(res.nit), str(res.message)


def fit(model: ModelSpec, series, n_restarts: int = 10, seed: int = 0,
        covariates: Optional[Covariates] = None) -> FitResult:
    """Maximize the marginal likelihood from ``n_restarts`` random initial points.

    Restart ``i`` draws its initial point from ``default_rng([seed, i])``, so
    results do not depend on execution order.
    """
    if n_restarts < 1:
        raise ValueError("n_restarts must be at least 1")
    obj = neg_mll_objective(model, series, covariates)
    base = model.values()
    traces = []
    best_u, best_f = None, math.inf
    for i in range(n_restarts):
        rng = np.random.default_rng([seed, i])
        u0 = np.array([s.sample(rng, base[s.name]) for s in obj.specs])
        if not obj.specs:
            f = obj(u0)
            traces.append(RestartTrace(base, base, -f, True, 0, "no free parameters"))
            if f < best_f:
                best_u, best_f = u0, f
            continue
        u, f, ok, nit, msg = _run_restart(obj, u0)
        traces.append(RestartTrace(obj.natural(u0), obj.natural(u), -f, ok, nit, msg))
        if f < best_f:
            best_u, best_f = u, f
    if best_u is None or not math.isfinite(best_f):
        raise OptimizationFailure("all optimizer restarts failed to reach a finite likelihood", traces)
    params = obj.natural(best_u)
    return FitResult(params, -best_f, model.with_values(params), traces)
