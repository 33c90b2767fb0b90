import numpy as np
import pytest

from stsgp import kernels as K
from stsgp.errors import CompositionError, ParameterDomainError
from stsgp.model import Covariates, ModelSpec
from stsgp.oracle import exact_covariance

LLM_DOC = {"components": [
    {"type": "llm", "params": {"c0": 1.0, "K0": 0.5, "q0_sq": 2.0}, "fixed": ["c0"]},
    {"type": "white_noise", "params": {"sigma0_sq": 0.3}},
]}


def test_roundtrip_document():
    spec = ModelSpec.from_dict(LLM_DOC)
    again = ModelSpec.from_dict(spec.to_dict())
    assert again.values() == spec.values()
    assert again.to_dict() == spec.to_dict()


def test_parameter_listing():
    params = ModelSpec.from_dict(LLM_DOC).parameters()
    assert [(k, kind, fixed) for k, kind, _, fixed in params] == [
        ("llm.c0", "mean", True), ("llm.K0", "variance", False), ("llm.q0_sq", "variance", False),
        ("white_noise.sigma0_sq", "variance", False),
    ]


def test_duplicate_labels_are_numbered():
    spec = ModelSpec.from_dict({"components": [
        {"type": "cyclic", "params": {"omega_c": 1.0}},
        {"type": "cyclic", "params": {"omega_c": 2.0}},
        {"type": "white_noise"},
    ]})
    assert "cyclic.omega_c" in spec.values() and "cyclic_2.omega_c" in spec.values()


def test_noise_rules():
    with pytest.raises(CompositionError):
        ModelSpec.from_dict({"components": [{"type": "llm"}]})
    with pytest.raises(CompositionError):
        ModelSpec.from_dict({"components": [{"type": "llm"}, {"type": "white_noise"}, {"type": "white_noise"}]})
    # purely stationary models may omit noise
    ModelSpec.from_dict({"components": [{"type": "exponential"}]})


def test_unknown_type_and_parameter():
    with pytest.raises(CompositionError):
        ModelSpec.from_dict({"components": [{"type": "arima"}]})
    with pytest.raises(CompositionError):
        ModelSpec.from_dict({"components": [{"type": "llm", "params": {"omega_c": 1}}, {"type": "white_noise"}]})
    with pytest.raises(CompositionError):
        ModelSpec.from_dict({"components": [{"type": "cyclic"}, {"type": "white_noise"}]})


def test_prior_equals_state_space_oracle():
    spec = ModelSpec.from_dict({"components": [
        {"type": "lllm", "params": {"c0": 1, "m0": 0.2, "K0": 1, "P0": 0.5, "q0_sq": 0.3, "g0_sq": 0.1}},
        {"type": "cyclic", "params": {"omega_c": 0.9, "m0": 0.1, "P0": 1.0, "g0_sq": 0.2}},
        {"type": "white_noise", "params": {"sigma0_sq": 0.4}},
    ]})
    t = np.array([0.5, 1.0, 2.5, 3.0, 6.0])
    obs = spec.observed(t)
    ref = exact_covariance(spec.state_space(), t)
    np.testing.assert_allclose(obs.cov, ref.cov, atol=1e-12)
    np.testing.assert_allclose(obs.mean, ref.mean, atol=1e-12)
    np.testing.assert_allclose(spec.prior(t).cov + 0.4 * np.eye(5), obs.cov)


def test_with_values_and_unknown_key():
    spec = ModelSpec.from_dict(LLM_DOC)
    new = spec.with_values({"llm.q0_sq": 5.0})
    assert new.values()["llm.q0_sq"] == 5.0
    assert spec.values()["llm.q0_sq"] == 2.0
    with pytest.raises(ParameterDomainError):
        spec.with_values({"llm.nope": 1.0})


def test_product_group():
    spec = ModelSpec.from_dict({"components": [
        {"type": "product", "name": "qp", "components": [
            {"type": "std_periodic", "params": {"omega_c": 2.0, "C": 1.5}},
            {"type": "exponential", "params": {"alpha": 0.2}},
        ]},
        {"type": "white_noise", "params": {"sigma0_sq": 0.1}},
    ]})
    keys = spec.values()
    assert "qp/std_periodic.omega_c" in keys and "qp/exponential.alpha" in keys
    t = np.array([1.0, 2.0, 3.5])
    expected = K.std_periodic_kernel(t, 2.0, 1.5).cov * K.exponential_kernel(t, 1.0, 0.2).cov
    np.testing.assert_allclose(spec.prior(t).cov, expected)
    assert spec.with_values({"qp/exponential.alpha": 0.5}).values()["qp/exponential.alpha"] == 0.5
    assert not spec.has_state_space
    with pytest.raises(CompositionError):
        spec.state_space()


def test_blr_features_needs_covariates():
    spec = ModelSpec.from_dict({"components": [
        {"type": "blr_features", "params": {"z0_sq": 2.0}, "features": ["x"]},
        {"type": "white_noise", "params": {"sigma0_sq": 0.1}},
    ]})
    t = np.array([1.0, 2.0, 3.0])
    cov = Covariates(t, {"x": np.array([1.0, -1.0, 0.5])})
    x = cov.columns["x"]
    np.testing.assert_allclose(spec.prior(t, cov).cov, 2.0 * np.outer(x, x))
    np.testing.assert_allclose(exact_covariance(spec.state_space(cov), t).cov, spec.observed(t, cov).cov, atol=1e-14)
    with pytest.raises(CompositionError):
        spec.prior(t)
    with pytest.raises(CompositionError):
        spec.prior([1.0, 4.0], cov)


def test_fit_document_accepted():
    spec = ModelSpec.from_dict({"params": {}, "mll": 0.0, "model": LLM_DOC})
    assert spec.noise_var == pytest.approx(0.3)
