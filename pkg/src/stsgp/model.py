"""Declarative additive structural models.

A :class:`ModelSpec` is a list of components. The same spec compiles either
to a prior (mean, covariance) on a time grid or to a block-diagonal state-space
model. Measurement noise lives only in the ``white_noise`` component, so
it is added exactly once whichever path is used.

Document form (JSON)::

    {"components": [
        {"type": "llm", "params": {"c0": 1000, "K0": 0, "q0_sq": 1500}, "fixed": ["c0", "K0"]},
        {"type": "white_noise", "params": {"sigma0_sq": 15000}},
        {"type": "product", "components": [
            {"type": "std_periodic", "params": {"omega_c": 1.0}},
            {"type": "exponential", "params": {"C": 1.0, "alpha": 0.1}}]}
    ]}
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from . import kernels as K
from . import statespace as ss
from .errors import CompositionError, ParameterDomainError

__all__ = ["Component", "ModelSpec", "Covariates", "PARAMETER_KINDS", "SS_COMPONENTS"]

# kind of each parameter, per component type; kinds drive transforms and initial sampling
PARAMETER_KINDS: dict[str, dict[str, str]] = {
    "blr": {"m0": "mean", "P0": "variance"},
    "llm": {"c0": "mean", "K0": "variance", "q0_sq": "variance"},
    "lllm": {"c0": "mean", "m0": "mean", "K0": "variance", "P0": "variance", "q0_sq": "variance", "g0_sq": "variance"},
    "cyclic": {"omega_c": "frequency", "m0": "mean", "P0": "variance", "g0_sq": "variance"},
    "damped": {"phi": "damping", "c0": "mean", "m0": "mean", "K0": "variance", "P0": "variance",
               "q0_sq": "variance", "g0_sq": "variance"},
    "blr_features": {"z0_sq": "variance"},
    "exponential": {"C": "variance", "alpha": "rate"},
    "damped_cosine": {"C": "variance", "alpha": "rate", "alpha1": "rate", "psi": "phase"},
    "std_periodic": {"C": "variance", "omega_c": "frequency"},
    "white_noise": {"sigma0_sq": "variance"},
}

_DEFAULTS = {"mean": 0.0, "variance": 0.0, "rate": 1.0, "phase": 0.0, "damping": 0.5}
_REQUIRED = {"omega_c"}

SS_COMPONENTS = frozenset({"blr", "llm", "lllm", "cyclic", "damped"})
_HAS_SS = SS_COMPONENTS | {"blr_features", "white_noise"}


@dataclass(frozen=True, eq=False)
class Covariates:
    """External regressors known at ``times``; looked up by exact time match."""

    times: np.ndarray
    columns: Mapping[str, np.ndarray]

    def matrix(self, names: Sequence[str], grid) -> np.ndarray:
        grid = np.asarray(grid, dtype=float)
        times = np.asarray(self.times, dtype=float)
        if times.size == 0:
            raise CompositionError("no covariate values available")
        idx = np.searchsorted(times, grid)
        idx_c = np.minimum(idx, len(times) - 1)
        ok = (idx < len(times)) & (times[idx_c] == grid)
        if not np.all(ok):
            missing = grid[~ok][0]
            raise CompositionError(f"covariate values are not available at t = {missing!r}")
        missing_cols = [n for n in names if n not in self.columns]
        if missing_cols:
            raise CompositionError(f"unknown covariate column(s): {', '.join(missing_cols)}")
        return np.column_stack([np.asarray(self.columns[n], dtype=float)[idx_c] for n in names])

    def row(self, names: Sequence[str], t: float) -> np.ndarray:
        return self.matrix(names, [t])[0]


@dataclass(frozen=True)
class Component:
    type: str
    params: Mapping[str, float] = field(default_factory=dict)
    fixed: frozenset = frozenset()
    label: str = ""
    features: tuple = ()
    parts: tuple = ()

    def __post_init__(self):
        if self.type == "product":
            if len(self.parts) < 2:
                raise CompositionError("a product group needs at least two components")
            if any(p.type in ("white_noise", "product") for p in self.parts):
                raise CompositionError("product groups may not contain white_noise or nested products")
            return
        if self.type not in PARAMETER_KINDS:
            raise CompositionError(f"unknown component type {self.type!r}")
        kinds = PARAMETER_KINDS[self.type]
        unknown = set(self.params) - set(kinds)
        if unknown:
            raise CompositionError(f"{self.type}: unknown parameter(s) {sorted(unknown)}; expected {sorted(kinds)}")
        unknown = set(self.fixed) - set(kinds)
        if unknown:
            raise CompositionError(f"{self.type}: cannot fix unknown parameter(s) {sorted(unknown)}")
        params = {}
        for name, kind in kinds.items():
            if name in self.params:
                params[name] = float(self.params[name])
            elif name in _REQUIRED:
                raise CompositionError(f"{self.type}: parameter {name!r} is required")
            else:
                params[name] = 1.0 if name == "C" else _DEFAULTS[kind]
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "fixed", frozenset(self.fixed))
        if self.type == "blr_features" and not self.features:
            raise CompositionError("blr_features needs a non-empty 'features' list of covariate columns")

    # --- kernel path -------------------------------------------------------
    def prior(self, grid, covariates: Optional[Covariates] = None) -> K.Moments:
        p = self.params
        t = self.type
        if t == "blr":
            return K.blr_kernel(grid, p["m0"], p["P0"])
        if t == "llm":
            return K.llm_kernel(grid, p["c0"], p["K0"], p["q0_sq"])
        if t == "lllm":
            return K.lllm_kernel(grid, K.LllmParams(**p))
        if t == "cyclic":
            return K.cyclic_kernel(grid, K.CyclicParams(**p))
        if t == "damped":
            return K.damped_trend_kernel(grid, K.DampedParams(**p))
        if t == "blr_features":
            if covariates is None:
                raise CompositionError("blr_features needs covariates")
            Z = covariates.matrix(self.features, grid)
            return K.blr_features_kernel(K.BlrFeaturesParams(p["z0_sq"], Z), grid)
        if t == "exponential":
            return K.exponential_kernel(grid, p["C"], p["alpha"])
        if t == "damped_cosine":
            return K.damped_cosine_kernel(grid, p["C"], p["alpha"], p["alpha1"], p["psi"])
        if t == "std_periodic":
            return K.std_periodic_kernel(grid, p["omega_c"], p["C"])
        if t == "white_noise":
            return K.white_noise_kernel(grid, p["sigma0_sq"])
        return K.product_kernel([c.prior(grid, covariates) for c in self.parts])

    # --- state-space path --------------------------------------------------
    def state_space(self, covariates: Optional[Covariates] = None) -> ss.StateSpaceModel:
        p = self.params
        t = self.type
        if t == "blr":
            return ss.build_blr_ss(p["m0"], p["P0"])
        if t == "llm":
            return ss.build_llm_ss(p["c0"], p["K0"], p["q0_sq"])
        if t == "lllm":
            return ss.build_lllm_ss(K.LllmParams(**p))
        if t == "cyclic":
            return ss.build_cyclic_ss(K.CyclicParams(**p))
        if t == "damped":
            return ss.build_damped_ss(K.DampedParams(**p))
        if t == "blr_features":
            if covariates is None:
                raise CompositionError("blr_features needs covariates")
            names = self.features
            return ss.build_blr_features_ss(p["z0_sq"], lambda s: covariates.row(names, s), len(names))
        raise CompositionError(f"component {t!r} has no state-space form")


def _labelled(components):
    counts: dict[str, int] = {}
    out = []
    for c in components:
        base = c.label or c.type
        counts[base] = counts.get(base, 0) + 1
        label = base if counts[base] == 1 else f"{base}_{counts[base]}"
        out.append(replace(c, label=label, parts=tuple(_labelled(c.parts))))
    return out


@dataclass(frozen=True)
class ModelSpec:
    components: tuple

    def __post_init__(self):
        comps = tuple(_labelled(self.components))
        if not comps:
            raise CompositionError("a model needs at least one component")
        n_noise = sum(c.type == "white_noise" for c in comps)
        if n_noise > 1:
            raise CompositionError("measurement noise must be carried by exactly one white_noise component")
        if n_noise == 0 and any(c.type in SS_COMPONENTS for c in comps):
            raise CompositionError("state-space-derived components need exactly one white_noise component")
        object.__setattr__(self, "components", comps)

    # --- document form -----------------------------------------------------
    @classmethod
    def from_dict(cls, doc: Mapping) -> "ModelSpec":
        if "model" in doc and "components" not in doc:
            doc = doc["model"]
        if not isinstance(doc, Mapping) or "components" not in doc:
            raise CompositionError("model document must contain a 'components' list")
        comp = doc.get("composition", "sum")
        if comp != "sum":
            raise CompositionError(f"top-level composition must be 'sum', got {comp!r}")
        return cls(tuple(_component_from_dict(c) for c in doc["components"]))

    def to_dict(self) -> dict:
        return {"composition": "sum", "components": [_component_to_dict(c) for c in self.components]}

    # --- parameters --------------------------------------------------------
    def _leaves(self):
        # (key prefix, component) for every parameter-carrying component
        for c in self.components:
            if c.type == "product":
                for p in c.parts:
                    yield f"{c.label}/{p.label}", p
            else:
                yield c.label, c

    def parameters(self) -> list[tuple[str, str, float, bool]]:
        """``(key, kind, value, fixed)`` for every parameter, in a stable order."""
        out = []
        for prefix, c in self._leaves():
            for name, kind in PARAMETER_KINDS[c.type].items():
                out.append((f"{prefix}.{name}", kind, c.params[name], name in c.fixed))
        return out

    def values(self) -> dict[str, float]:
        return {k: v for k, _, v, _ in self.parameters()}

    def with_values(self, values: Mapping[str, float]) -> "ModelSpec":
        known = {k for k, *_ in self.parameters()}
        unknown = set(values) - known
        if unknown:
            raise ParameterDomainError(f"unknown parameter keys {sorted(unknown)}")

        def update(c, prefix=""):
            if c.type == "product":
                return replace(c, parts=tuple(update(p, f"{c.label}/") for p in c.parts))
            params = dict(c.params)
            for name in params:
                key = f"{prefix}{c.label}.{name}"
                if key in values:
                    params[name] = float(values[key])
            return replace(c, params=params)

        return ModelSpec(tuple(update(c) for c in self.components))

    # --- compilation -------------------------------------------------------
    @property
    def noise_var(self) -> float:
        return sum(c.params["sigma0_sq"] for c in self.components if c.type == "white_noise")

    @property
    def uniform_only(self) -> bool:
        return any(c.type == "damped" for _, c in self._leaves())

    @property
    def has_state_space(self) -> bool:
        return all(c.type in _HAS_SS for c in self.components)

    def prior(self, grid, covariates: Optional[Covariates] = None) -> K.Moments:
        """Latent signal moments (measurement noise excluded)."""
        grid = K.as_grid(grid)
        parts = [c.prior(grid, covariates) for c in self.components if c.type != "white_noise"]
        if not parts:
            return K.Moments(grid, np.zeros(len(grid)), np.zeros((len(grid), len(grid))))
        return K.sum_kernel(parts)

    def observed(self, grid, covariates: Optional[Covariates] = None) -> K.Moments:
        """Moments of the noisy observations."""
        m = self.prior(grid, covariates)
        return K.Moments(m.grid, m.mean, m.cov + self.noise_var * np.eye(len(m.grid)))

    def state_space(self, covariates: Optional[Covariates] = None) -> ss.StateSpaceModel:
        blocks = []
        for c in self.components:
            if c.type == "white_noise":
                continue
            if c.type not in _HAS_SS:
                raise CompositionError(f"component {c.type!r} has no state-space form")
            blocks.append(c.state_space(covariates))
        if not blocks:
            raise CompositionError("model has no state components")
        return ss.with_noise(ss.combine_models(blocks), self.noise_var)


def _component_from_dict(d: Mapping) -> Component:
    if not isinstance(d, Mapping) or "type" not in d:
        raise CompositionError(f"component must be an object with a 'type', got {d!r}")
    if d["type"] == "product":
        return Component("product", label=d.get("name", ""),
                         parts=tuple(_component_from_dict(p) for p in d.get("components", [])))
    return Component(
        type=d["type"],
        params=dict(d.get("params", {})),
        fixed=frozenset(d.get("fixed", [])),
        label=d.get("name", ""),
        features=tuple(d.get("features", ())),
    )


def _component_to_dict(c: Component) -> dict:
    if c.type == "product":
        return {"type": "product", "name": c.label, "components": [_component_to_dict(p) for p in c.parts]}
    out = {"type": c.type, "name": c.label, "params": dict(c.params), "fixed": sorted(c.fixed)}
    if c.features:
        out["features"] = list(c.features)
    return out
