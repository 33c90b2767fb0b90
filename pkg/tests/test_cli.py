import json
import subprocess
import sys

import numpy as np
import pytest

from stsgp.cli import main
from stsgp.io import read_forecast

LLM_NILE = {"components": [
    {"type": "llm", "params": {"c0": 1000.0, "K0": 0.0, "q0_sq": 1469.1}, "fixed": ["c0", "K0"]},
    {"type": "white_noise", "params": {"sigma0_sq": 15099.0}},
]}
BLR_AFFINE = {"components": [
    {"type": "lllm", "params": {"K0": 1.0, "P0": 1.0}},
    {"type": "white_noise", "params": {"sigma0_sq": 0.5}},
]}
DAMPED = {"components": [
    {"type": "damped", "params": {"phi": 0.8, "K0": 1.0, "P0": 1.0, "q0_sq": 0.1, "g0_sq": 0.1}},
    {"type": "white_noise", "params": {"sigma0_sq": 0.2}},
]}
CYCLIC = {"components": [
    {"type": "cyclic", "params": {"omega_c": 1.0, "P0": 1.0, "g0_sq": 0.1}},
    {"type": "white_noise", "params": {"sigma0_sq": 0.1}},
]}


def _json(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def _csv(tmp_path, name, t, y):
    p = tmp_path / name
    p.write_text("t,y\n" + "".join(f"{float(a)!r},{float(b)!r}\n" for a, b in zip(t, y)))
    return str(p)


def _run(*argv):
    return main([str(a) for a in argv])


def test_fit_nile(tmp_path):
    out = tmp_path / "fit.json"
    assert _run("fit", "--data", "nile", "--model", _json(tmp_path, "m.json", LLM_NILE),
                "--restarts", 2, "--seed", 0, "--out", out) == 0
    doc = json.loads(out.read_text())
    assert np.isfinite(doc["mll"])
    assert doc["params"]["llm.q0_sq"] > 0 and doc["params"]["white_noise.sigma0_sq"] > 0
    assert len(doc["restarts"]) == 2


def test_fit_missing_column(tmp_path, capsys):
    data = _csv(tmp_path, "d.csv", [1, 2, 3], [1.0, 2.0, 1.5])
    rc = _run("fit", "--data", data, "--value-col", "volume", "--model", _json(tmp_path, "m.json", LLM_NILE),
              "--out", tmp_path / "o.json")
    assert rc == 1
    assert "volume" in capsys.readouterr().err


def test_fit_zero_restarts(tmp_path):
    assert _run("fit", "--data", "nile", "--model", _json(tmp_path, "m.json", LLM_NILE),
                "--restarts", 0, "--out", tmp_path / "o.json") == 1


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as info:
        main(["fit"])
    assert info.value.code == 1


def test_forecast_engines_agree(tmp_path):
    model = _json(tmp_path, "m.json", LLM_NILE)
    a, b = tmp_path / "gp.csv", tmp_path / "ss.csv"
    assert _run("forecast", "--data", "nile", "--model", model, "--horizon", 10, "--engine", "gp", "--out", a) == 0
    assert _run("forecast", "--data", "nile", "--model", model, "--horizon", 10, "--engine", "ss", "--out", b) == 0
    fa, fb = read_forecast(a), read_forecast(b)
    np.testing.assert_array_equal(fa.times, 1970 + np.arange(1.0, 11.0))
    from stsgp.io import load_nile
    tol = 1e-6 * np.std(load_nile().values)
    assert np.max(np.abs(fa.mean - fb.mean)) <= tol
    assert np.max(np.abs(fa.var_latent - fb.var_latent)) <= tol


def test_forecast_zero_horizon(tmp_path):
    out = tmp_path / "f.csv"
    assert _run("forecast", "--data", "nile", "--model", _json(tmp_path, "m.json", LLM_NILE),
                "--horizon", 0, "--out", out) == 0
    assert out.read_text() == "time,mean,var_latent,var_observed\n"


def test_forecast_explicit_times(tmp_path):
    out = tmp_path / "f.csv"
    assert _run("forecast", "--data", "nile", "--model", _json(tmp_path, "m.json", LLM_NILE),
                "--horizon", "1971.5,1975", "--out", out) == 0
    np.testing.assert_array_equal(read_forecast(out).times, [1971.5, 1975.0])


def test_forecast_horizon_before_end(tmp_path):
    assert _run("forecast", "--data", "nile", "--model", _json(tmp_path, "m.json", LLM_NILE),
                "--horizon", "1960.0", "--out", tmp_path / "f.csv") == 1


def test_forecast_accepts_fit_document(tmp_path):
    fit_out = tmp_path / "fit.json"
    assert _run("fit", "--data", "nile", "--model", _json(tmp_path, "m.json", LLM_NILE),
                "--restarts", 1, "--out", fit_out) == 0
    assert _run("forecast", "--data", "nile", "--model", fit_out, "--horizon", 3, "--out", tmp_path / "f.csv") == 0


def test_sample_affine_paths(tmp_path):
    out = tmp_path / "s.csv"
    assert _run("sample", "--model", _json(tmp_path, "m.json", BLR_AFFINE), "--grid", "1:10:40",
                "--paths", 5, "--seed", 0, "--out", out) == 0
    arr = np.loadtxt(out, delimiter=",", skiprows=1)
    assert arr.shape == (40, 6)
    assert np.max(np.abs(np.diff(arr[:, 1:], n=2, axis=0))) <= 1e-8


def test_sample_zero_covariance_is_mean(tmp_path):
    doc = {"components": [{"type": "llm", "params": {"c0": 2.5}}, {"type": "white_noise"}]}
    out = tmp_path / "s.csv"
    assert _run("sample", "--model", _json(tmp_path, "m.json", doc), "--grid", "1:3:3", "--out", out) == 0
    arr = np.loadtxt(out, delimiter=",", skiprows=1)
    np.testing.assert_array_equal(arr[:, 1], 2.5)


def test_sample_seed_from_environment(tmp_path, monkeypatch):
    model = _json(tmp_path, "m.json", CYCLIC)
    monkeypatch.setenv("STS_SEED", "7")
    _run("sample", "--model", model, "--grid", "1:5:5", "--out", tmp_path / "a.csv")
    _run("sample", "--model", model, "--grid", "1:5:5", "--seed", 7, "--out", tmp_path / "b.csv")
    _run("sample", "--model", model, "--grid", "1:5:5", "--seed", 8, "--out", tmp_path / "c.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "c.csv").read_bytes()


def test_compare_nile(tmp_path):
    out = tmp_path / "c.json"
    assert _run("compare", "--data", "nile", "--model", _json(tmp_path, "m.json", LLM_NILE), "--out", out) == 0
    doc = json.loads(out.read_text())
    assert doc["equivalent"] is True
    assert len(doc["forecast_horizon"]) == 10


def test_compare_cyclic_synthetic(tmp_path):
    from stsgp.io import generate_synthetic
    from stsgp.model import ModelSpec
    ts = generate_synthetic(ModelSpec.from_dict(CYCLIC), 0.5 * np.arange(1.0, 61.0), seed=1)
    out = tmp_path / "c.json"
    assert _run("compare", "--data", _csv(tmp_path, "d.csv", ts.times, ts.values),
                "--model", _json(tmp_path, "m.json", CYCLIC), "--out", out) == 0
    assert json.loads(out.read_text())["equivalent"] is True


def test_compare_damped_irregular(tmp_path, capsys):
    data = _csv(tmp_path, "d.csv", [1.0, 2.0, 3.5, 4.0], [0.1, 0.2, 0.4, 0.3])
    rc = _run("compare", "--data", data, "--model", _json(tmp_path, "m.json", DAMPED), "--out", tmp_path / "c.json")
    assert rc == 1
    assert "uniform" in capsys.readouterr().err


def test_oracle_output(tmp_path):
    doc = {"components": [{"type": "lllm", "params": {"K0": 1, "P0": 1, "q0_sq": 1, "g0_sq": 1}},
                          {"type": "white_noise", "params": {"sigma0_sq": 1}}]}
    out = tmp_path / "o.csv"
    assert _run("oracle", "--model", _json(tmp_path, "m.json", doc), "--grid", "1:3:3", "--out", out) == 0
    arr = np.loadtxt(out, delimiter=",", skiprows=1)
    np.testing.assert_allclose(arr[:, 2:], [[4, 4, 5], [4, 9, 11], [5, 11, 19]], atol=1e-12)
    assert out.read_text().splitlines()[0] == "time,mean,cov_0,cov_1,cov_2"


def test_bad_grid(tmp_path):
    assert _run("oracle", "--model", _json(tmp_path, "m.json", CYCLIC), "--grid", "1:3", "--out", "-") == 1
    assert _run("oracle", "--model", _json(tmp_path, "m.json", CYCLIC), "--grid", "0:3:4", "--out", "-") == 1


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    import stsgp.cli as cli
    from stsgp.errors import NumericalFailure

    def broken(*a, **k):
        raise NumericalFailure("boom")

    monkeypatch.setattr(cli, "exact_covariance", broken)
    assert _run("oracle", "--model", _json(tmp_path, "m.json", CYCLIC), "--grid", "1:3:3", "--out", "-") == 2


def test_module_entry_point(tmp_path):
    out = tmp_path / "o.csv"
    proc = subprocess.run([sys.executable, "-m", "stsgp", "oracle", "--model", _json(tmp_path, "m.json", CYCLIC),
                           "--grid", "1:2:2", "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
