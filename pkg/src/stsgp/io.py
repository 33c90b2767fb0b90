"""Time-series ingestion, synthetic data and result (de)serialization."""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DataError
from .model import Covariates, ModelSpec
from .statespace import Forecast, simulate

__all__ = [
    "TimeSeries",
    "read_csv",
    "load_nile",
    "read_model_spec",
    "write_model_spec",
    "generate_synthetic",
    "write_results",
    "read_forecast",
    "read_fit",
    "atomic_write_text",
]

FORECAST_COLUMNS = ("time", "mean", "var_latent", "var_observed")


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Strictly increasing positive times with one finite value each.

    ``offset`` records any shift applied at load time so that the first time
    point is positive; ``covariates`` holds optional external regressors.
    """

    times: np.ndarray
    values: np.ndarray
    name: Optional[str] = None
    offset: float = 0.0
    covariates: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        y = np.asarray(self.values, dtype=float).reshape(-1)
        if t.shape != y.shape:
            raise DataError(f"{len(y)} values for {len(t)} time points")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise DataError("time series contains non-finite entries")
        if t.size and t[0] <= 0:
            raise DataError(f"time points must be > 0, got {t[0]!r}")
        bad = np.flatnonzero(np.diff(t) <= 0)
        if bad.size:
            raise DataError(f"times must be strictly increasing; violated at index {bad[0] + 1}")
        cov = {}
        for k, v in self.covariates.items():
            v = np.asarray(v, dtype=float).reshape(-1)
            if v.shape != t.shape:
                raise DataError(f"covariate {k!r} has {len(v)} values for {len(t)} time points")
            cov[k] = v
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", y)
        object.__setattr__(self, "covariates", cov)

    def __len__(self):
        return len(self.times)

    def covariate_table(self) -> Optional[Covariates]:
        return Covariates(self.times, self.covariates) if self.covariates else None


def _parse_float(text, row, column):
    if text is None or text.strip() == "":
        raise DataError(f"row {row}: missing value in column {column!r}")
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"row {row}: cannot parse {text!r} in column {column!r}") from None
    if not math.isfinite(v):
        raise DataError(f"row {row}: non-finite value {text!r} in column {column!r}")
    return v


def read_csv(path, time_column: str, value_column: str, feature_columns: Sequence[str] = ()) -> TimeSeries:
    """Read a headed UTF-8 CSV into a validated :class:`TimeSeries`.

    Row numbers in error messages count the header as row 1. A series whose
    first time is ``<= 0`` is shifted so that it starts one spacing after the
    origin; the shift is kept in ``TimeSeries.offset``.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            for col in (time_column, value_column, *feature_columns):
                if col not in header:
                    raise DataError(f"column {col!r} not found in {path} (columns: {', '.join(header)})")
            times, values = [], []
            feats = {c: [] for c in feature_columns}
            for row_no, row in enumerate(reader, start=2):
                if None in row:
                    raise DataError(f"row {row_no}: more fields than header columns")
                times.append(_parse_float(row[time_column], row_no, time_column))
                values.append(_parse_float(row[value_column], row_no, value_column))
                for c in feature_columns:
                    feats[c].append(_parse_float(row[c], row_no, c))
                if len(times) > 1 and times[-1] <= times[-2]:
                    kind = "duplicate" if times[-1] == times[-2] else "decreasing"
                    raise DataError(f"row {row_no}: {kind} time stamp {times[-1]!r}")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except csv.Error as exc:
        raise DataError(f"malformed CSV {path}: {exc}") from exc
    t = np.asarray(times, dtype=float)
    offset = 0.0
    if t.size and t[0] <= 0:
        spacing = float(t[1] - t[0]) if t.size > 1 else 1.0
        offset = spacing - float(t[0])
        t = t + offset
    return TimeSeries(t, np.asarray(values), name=path.stem, offset=offset, covariates=feats)


def load_nile() -> TimeSeries:
    """Annual Nile flow at Aswan, 1871-1970 (100 points); times are calendar years."""
    src = resources.files("stsgp") / "data" / "nile.csv"
    with resources.as_file(src) as p:
        ts = read_csv(p, "year", "volume")
    return TimeSeries(ts.times, ts.values, name="nile")


def read_model_spec(path) -> ModelSpec:
    """Load a model document; fit results (with a ``model`` entry) are accepted too."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"model file {path} is not valid JSON: {exc}") from exc
    return ModelSpec.from_dict(doc)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_model_spec(spec: ModelSpec, path) -> None:
    atomic_write_text(path, _dumps(spec.to_dict()))


def generate_synthetic(model: ModelSpec, grid, seed: int = 0, covariates: Optional[Covariates] = None,
                       name: str = "synthetic") -> TimeSeries:
    """Forward-simulate the model's state-space form on ``grid``; deterministic per seed."""
    ssm = model.state_space(covariates)
    rng = np.random.default_rng(seed)
    y = simulate(ssm, grid, rng, n_paths=1)[0]
    cov = {}
    if covariates is not None:
        cov = {k: covariates.matrix([k], grid)[:, 0] for k in covariates.columns}
    return TimeSeries(np.asarray(grid, dtype=float), y, name=name, covariates=cov)


def atomic_write_text(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename over ``path``."""
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=f".{path.name}.")
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc


def _fmt(x: float) -> str:
    return repr(float(x))


def forecast_csv(fc: Forecast) -> str:
    lines = [",".join(FORECAST_COLUMNS)]
    for row in zip(fc.times, fc.mean, fc.var_latent, fc.var_observed):
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def write_results(result, path, format: Optional[str] = None) -> None:
    """Forecasts go to CSV, fits (anything with ``to_dict``) or plain mappings to JSON."""
    if format is None:
        format = "csv" if isinstance(result, Forecast) else "json"
    if format == "csv":
        if not isinstance(result, Forecast):
            raise DataError("only forecasts can be written as CSV")
        atomic_write_text(path, forecast_csv(result))
    elif format == "json":
        doc = result.to_dict() if hasattr(result, "to_dict") else result
        atomic_write_text(path, _dumps(doc))
    else:
        raise DataError(f"unknown output format {format!r}")


def read_forecast(path) -> Forecast:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != FORECAST_COLUMNS:
            raise DataError(f"unexpected forecast header {header}")
        rows = [[float(v) for v in r] for r in reader if r]
    arr = np.array(rows, dtype=float).reshape(-1, 4)
    return Forecast(*(arr[:, i].copy() for i in range(4)))


def read_fit(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
