"""Command-line front end.

Exit codes: 0 success, 1 input or usage error, 2 numerical or optimization failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import gp
from .errors import NumericalFailure, OptimizationFailure, StsError
from .io import TimeSeries, _dumps, atomic_write_text, forecast_csv, load_nile, read_csv, read_model_spec
from .model import ModelSpec
from .optimize import fit
from .oracle import exact_covariance
from .statespace import Forecast, forecast, kalman_filter, rts_smoother

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2
DEFAULT_COMPARE_HORIZON = 10
EQUIVALENCE_RTOL = 1e-6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _default_seed() -> int:
    raw = os.environ.get("STS_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"STS_SEED must be an integer, got {raw!r}") from None


def _feature_columns(spec: ModelSpec) -> list[str]:
    cols: list[str] = []
    for c in spec.components:
        for leaf in (c.parts or (c,)):
            cols.extend(f for f in leaf.features if f not in cols)
    return cols


def _load_data(args, spec: ModelSpec) -> TimeSeries:
    if args.data == "nile" and not Path(args.data).exists():
        return load_nile()
    return read_csv(args.data, args.time_col, args.value_col, _feature_columns(spec))


def _parse_grid(text: str) -> np.ndarray:
    try:
        start, stop, n = text.split(":")
        grid = np.linspace(float(start), float(stop), int(n))
    except ValueError:
        raise UsageError(f"--grid must look like start:stop:n, got {text!r}") from None
    return grid


def _horizon(text: str, times: np.ndarray) -> np.ndarray:
    text = text.strip()
    try:
        steps = int(text)
    except ValueError:
        try:
            return np.array([float(v) for v in text.split(",") if v.strip()])
        except ValueError:
            raise UsageError(f"--horizon must be a step count or comma-separated times, got {text!r}") from None
    if steps < 0:
        raise UsageError("--horizon step count must be >= 0")
    spacing = times[-1] - times[-2] if len(times) > 1 else (times[-1] if len(times) else 1.0)
    last = times[-1] if len(times) else 0.0
    return last + spacing * np.arange(1, steps + 1)


def _emit(text: str, out: str) -> None:
    if out == "-":
        sys.stdout.write(text)
    else:
        atomic_write_text(out, text)


def _fmt(x) -> str:
    return repr(float(x))


def _csv(header, columns) -> str:
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def gp_forecast(spec: ModelSpec, series: TimeSeries, horizon: np.ndarray) -> Forecast:
    cov = series.covariate_table()
    post = gp.posterior(lambda g: spec.prior(g, cov), series, horizon, spec.noise_var)
    return Forecast(post.query, post.mean, post.var_latent, post.var_observed)


def ss_forecast(spec: ModelSpec, series: TimeSeries, horizon: np.ndarray) -> Forecast:
    model = spec.state_space(series.covariate_table())
    return forecast(model, kalman_filter(model, series), horizon)


def compare_report(spec: ModelSpec, series: TimeSeries, horizon_steps: int = DEFAULT_COMPARE_HORIZON) -> dict:
    """Run both inference routes and report how far apart they are."""
    if not spec.has_state_space:
        raise UsageError("compare needs a model whose components all have a state-space form")
    cov = series.covariate_table()
    model = spec.state_space(cov)
    fr = kalman_filter(model, series)
    sm = rts_smoother(model, fr)
    horizon = _horizon(str(horizon_steps), series.times)
    post = gp.posterior(lambda g: spec.prior(g, cov), series, series.times, spec.noise_var)
    fc_ss = forecast(model, fr, horizon)
    fc_gp = gp_forecast(spec, series, horizon)
    H = np.array([model.observation_row(t) for t in series.times])
    smoothed_signal = np.einsum("kd,kd->k", H, sm.means)

    def maxdiff(a, b):
        return float(np.max(np.abs(a - b))) if len(a) else 0.0

    scale = float(np.std(series.values)) if len(series) else 1.0
    tol = EQUIVALENCE_RTOL * max(scale, np.finfo(float).tiny)
    mll_tol = EQUIVALENCE_RTOL * max(1.0, abs(post.log_marginal_likelihood))
    report = {
        "n_observations": len(series),
        "gp_mll": post.log_marginal_likelihood,
        "kf_loglik": fr.loglik,
        "mll_abs_diff": abs(post.log_marginal_likelihood - fr.loglik),
        "mll_tolerance": mll_tol,
        "posterior_mean_max_abs_diff": maxdiff(post.mean, smoothed_signal),
        "forecast_horizon": [float(v) for v in horizon],
        "forecast_mean_max_abs_diff": maxdiff(fc_gp.mean, fc_ss.mean),
        "forecast_var_max_abs_diff": maxdiff(fc_gp.var_latent, fc_ss.var_latent),
        "tolerance": tol,
    }
    report["equivalent"] = bool(
        report["mll_abs_diff"] <= mll_tol
        and report["posterior_mean_max_abs_diff"] <= tol
        and report["forecast_mean_max_abs_diff"] <= tol
        and report["forecast_var_max_abs_diff"] <= tol
    )
    return report


def cmd_fit(args) -> int:
    if args.restarts < 1:
        raise UsageError("--restarts must be at least 1")
    spec = read_model_spec(args.model)
    series = _load_data(args, spec)
    result = fit(spec, series, n_restarts=args.restarts, seed=args.seed, covariates=series.covariate_table())
    _emit(_dumps(result.to_dict()), args.out)
    return EXIT_OK


def cmd_forecast(args) -> int:
    spec = read_model_spec(args.model)
    series = _load_data(args, spec)
    horizon = _horizon(args.horizon, series.times)
    if horizon.size and len(series) and horizon[0] <= series.times[-1]:
        raise UsageError(f"horizon times must come after the last training time {series.times[-1]!r}")
    fc = gp_forecast(spec, series, horizon) if args.engine == "gp" else ss_forecast(spec, series, horizon)
    _emit(forecast_csv(fc), args.out)
    return EXIT_OK


def cmd_sample(args) -> int:
    if args.paths < 1:
        raise UsageError("--paths must be at least 1")
    spec = read_model_spec(args.model)
    grid = _parse_grid(args.grid)
    mom = spec.observed(grid) if args.with_noise else spec.prior(grid)
    paths = gp.sample_prior(mom.mean, mom.cov, args.paths, args.seed)
    header = ["time"] + [f"path_{i}" for i in range(args.paths)]
    _emit(_csv(header, [mom.grid, *paths.T]), args.out)
    return EXIT_OK


def cmd_compare(args) -> int:
    spec = read_model_spec(args.model)
    series = _load_data(args, spec)
    report = compare_report(spec, series, args.horizon)
    _emit(_dumps(report), args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    spec = read_model_spec(args.model)
    grid = _parse_grid(args.grid)
    mom = exact_covariance(spec.state_space(), grid)
    header = ["time", "mean"] + [f"cov_{i}" for i in range(len(grid))]
    _emit(_csv(header, [mom.grid, mom.mean, *mom.cov.T]), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stsgp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_args(sp):
        sp.add_argument("--data", required=True, help="CSV file, or 'nile' for the bundled series")
        sp.add_argument("--time-col", default="t")
        sp.add_argument("--value-col", default="y")

    sp = sub.add_parser("fit", help="maximize the marginal likelihood")
    data_args(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--restarts", type=int, default=10)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("forecast", help="predict beyond the data")
    data_args(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--horizon", required=True, help="integer step count, or times with a decimal point or comma (e.g. 1975.0 or 1971,1975)")
    sp.add_argument("--engine", choices=("gp", "ss"), default="gp")
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_forecast)

    sp = sub.add_parser("sample", help="draw prior sample paths")
    sp.add_argument("--model", required=True)
    sp.add_argument("--grid", required=True, help="start:stop:n")
    sp.add_argument("--paths", type=int, default=1)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--with-noise", action="store_true", help="include measurement noise in the paths")
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("compare", help="GP regression vs Kalman filtering on the same model")
    data_args(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--horizon", type=int, default=DEFAULT_COMPARE_HORIZON)
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("oracle", help="exact moments by state propagation")
    sp.add_argument("--model", required=True)
    sp.add_argument("--grid", required=True, help="start:stop:n")
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "seed", 0) is None:
            args.seed = _default_seed()
        return args.func(args)
    except (NumericalFailure, OptimizationFailure) as exc:
        print(f"stsgp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, StsError, ValueError) as exc:
        print(f"stsgp: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
