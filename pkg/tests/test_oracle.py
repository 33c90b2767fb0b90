import numpy as np
import pytest

from stsgp import kernels as K
from stsgp import statespace as ss
from stsgp.errors import ParameterDomainError
from stsgp.oracle import block_propagator_covariance, exact_covariance, monte_carlo_covariance

ONES = K.LllmParams(K0=1, P0=1, q0_sq=1, g0_sq=1, sigma0_sq=1)


def test_blr_example():
    ref = exact_covariance(ss.build_blr_ss(m0=0.7, P0=2.0, sigma0_sq=0.5), [1, 2])
    np.testing.assert_allclose(ref.cov, 2.0 * np.array([[1, 2], [2, 4]]) + 0.5 * np.eye(2), atol=1e-14)
    np.testing.assert_allclose(ref.mean, [0.7, 1.4])


def test_llm_example():
    t = np.array([0.4, 1.0, 2.5, 7.0])
    ref = exact_covariance(ss.build_llm_ss(c0=1.0, K0=0.3, q0_sq=2.0, sigma0_sq=0.1), t)
    np.testing.assert_allclose(ref.cov, 0.3 + 2.0 * np.minimum.outer(t, t) + 0.1 * np.eye(4), atol=1e-13)


def test_lllm_all_ones():
    ref = exact_covariance(ss.build_lllm_ss(ONES), [1, 2, 3])
    np.testing.assert_allclose(ref.cov, [[4, 4, 5], [4, 9, 11], [5, 11, 19]], atol=1e-12)


@pytest.mark.parametrize("model", [
    ss.build_lllm_ss(K.LllmParams(c0=1, m0=-1, K0=0.5, P0=2, q0_sq=0.3, g0_sq=1.2, sigma0_sq=0.2)),
    ss.build_cyclic_ss(K.CyclicParams(omega_c=1.7, m0=0.4, P0=1.1, g0_sq=0.6, sigma0_sq=0.3)),
])
def test_block_propagator_factorization(model):
    t = np.array([0.3, 0.9, 2.0, 2.2, 4.5, 5.0])
    a, b = exact_covariance(model, t), block_propagator_covariance(model, t)
    np.testing.assert_allclose(a.cov, b.cov, atol=1e-10)
    np.testing.assert_allclose(a.mean, b.mean, atol=1e-10)


def test_block_propagator_rejects_damped():
    with pytest.raises(ParameterDomainError):
        block_propagator_covariance(ss.build_damped_ss(K.DampedParams(P0=1)), [1, 2])


def test_oracle_is_psd():
    ref = exact_covariance(ss.build_damped_ss(K.DampedParams(K0=1, P0=1, q0_sq=0.2, g0_sq=0.4, phi=0.8)),
                           np.arange(1.0, 21))
    assert np.linalg.eigvalsh(ref.cov)[0] >= -1e-10


def test_monte_carlo_rejects_small_n():
    with pytest.raises(ParameterDomainError):
        monte_carlo_covariance(ss.build_llm_ss(K0=1), [1, 2], n_samples=999)


def test_monte_carlo_deterministic_model():
    est = monte_carlo_covariance(ss.build_llm_ss(c0=3.0), [1, 2, 3], n_samples=1000, seed=1)
    assert np.all(est.cov == 0.0)
    np.testing.assert_array_equal(est.mean, 3.0)


def test_monte_carlo_same_seed_identical():
    m = ss.build_llm_ss(K0=1, q0_sq=1, sigma0_sq=1)
    a = monte_carlo_covariance(m, [1, 2], n_samples=2000, seed=5)
    b = monte_carlo_covariance(m, [1, 2], n_samples=2000, seed=5)
    np.testing.assert_array_equal(a.cov, b.cov)


def _mc_within_5se(model, t):
    n = 200_000
    exact = exact_covariance(model, t)
    est = monte_carlo_covariance(model, t, n_samples=n, seed=0)
    # Gaussian standard error of a sample covariance: sqrt((S_ii S_jj + S_ij^2) / n)
    d = np.diag(exact.cov)
    se = np.sqrt((np.outer(d, d) + exact.cov ** 2) / n)
    assert np.all(np.abs(est.cov - exact.cov) <= 5 * se)
    assert np.all(np.abs(est.mean - exact.mean) <= 5 * np.sqrt(d / n))
    return exact, est


def test_monte_carlo_llm():
    exact, est = _mc_within_5se(ss.build_llm_ss(c0=1, K0=0.5, q0_sq=1.5, sigma0_sq=0.4), [0.5, 1.0, 3.0])
    np.testing.assert_allclose(np.diag(est.cov), np.diag(exact.cov), rtol=0.03)


def test_monte_carlo_lllm():
    _mc_within_5se(ss.build_lllm_ss(ONES), [1.0, 2.0, 3.0])


def test_monte_carlo_cyclic():
    _mc_within_5se(ss.build_cyclic_ss(K.CyclicParams(omega_c=2.0, m0=1.0, P0=1.0, g0_sq=0.5, sigma0_sq=0.1)),
                   [0.3, 1.1, 1.4])
