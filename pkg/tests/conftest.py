import numpy as np
import pytest

from stsgp import kernels as K
from stsgp import statespace as ss


def random_grid(rng, n, uniform=False):
    if uniform:
        h = rng.uniform(0.2, 2.0)
        return h * np.arange(1, n + 1)
    return np.cumsum(rng.uniform(0.05, 2.0, size=n))


def random_family(rng, family, n):
    """(kernel moments, state-space model) for one random instance of ``family``."""
    uniform = family == "damped"
    t = random_grid(rng, n, uniform)
    s2 = rng.uniform(0.0, 2.0)
    if family == "blr":
        m0, P0 = rng.normal(), rng.uniform(0, 3)
        return K.blr_kernel(t, m0, P0, s2), ss.build_blr_ss(m0, P0, s2)
    if family == "llm":
        c0, K0, q = rng.normal(), rng.uniform(0, 3), rng.uniform(0, 3)
        return K.llm_kernel(t, c0, K0, q, s2), ss.build_llm_ss(c0, K0, q, s2)
    if family == "lllm":
        p = K.LllmParams(*rng.normal(size=2), *rng.uniform(0, 3, size=4), s2)
        return K.lllm_kernel(t, p), ss.build_lllm_ss(p)
    if family == "cyclic":
        p = K.CyclicParams(rng.uniform(0.1, 5.0), rng.normal(), *rng.uniform(0, 3, size=2), s2)
        return K.cyclic_kernel(t, p), ss.build_cyclic_ss(p)
    if family == "damped":
        p = K.DampedParams(*rng.normal(size=2), *rng.uniform(0, 3, size=4), s2, phi=rng.uniform(0.05, 0.99))
        return K.damped_trend_kernel(t, p), ss.build_damped_ss(p)
    if family == "sum":
        a = K.LllmParams(rng.normal(), rng.normal(), *rng.uniform(0, 2, size=4))
        c = K.CyclicParams(rng.uniform(0.1, 5.0), rng.normal(), *rng.uniform(0, 2, size=2))
        mom = K.sum_kernel([K.lllm_kernel(t, a), K.cyclic_kernel(t, c), K.white_noise_kernel(t, s2)])
        model = ss.with_noise(ss.combine_models([ss.build_lllm_ss(a), ss.build_cyclic_ss(c)]), s2)
        return mom, model
    raise ValueError(family)


FAMILIES = ("blr", "llm", "lllm", "cyclic", "damped", "sum")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
