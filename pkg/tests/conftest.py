import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bbmeld.simulation import SimSpec, simulate_trip
from bbmeld.timeline import GpsSeries, Track1D

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_indices(rng, T, K):
    inner = np.sort(rng.choice(np.arange(2, T), size=K - 2, replace=False))
    return np.concatenate(([1], inner, [T])).astype(np.int64)


def random_instance(rng, T=60, K=6, Q=0, phi=(0.2, 0.1), sigma2_G=0.0625, anchored=True):
    """Model-drawn (truth, x, y); ``anchored`` shifts x so x(1) equals the start fix."""
    idx = random_indices(rng, T, K)
    beta = tuple(rng.normal(0, 1.0, Q))
    spec = SimSpec(T, tuple(idx), phi, beta, sigma2_G, (float(rng.normal()), float(rng.normal())),
                   int(rng.integers(2**31)))
    truth, x, y = simulate_trip(spec)
    if anchored:
        x = Track1D.from_values(x.values - x.values[0] + y.values[0])
    return truth, x, y


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_instance(rng):
    return random_instance(rng, T=80, K=7, Q=1)


def make_y(idx, vals, sigma2_G=0.0625):
    return GpsSeries(np.asarray(idx), np.asarray(vals, dtype=float), sigma2_G)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """``record(n, ok, detail)`` prints one PASS/FAIL line and fails the test if not ``ok``."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(n, ok, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
