import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_pair(rng, d, scale=1.0):
    return scale * rng.uniform(-1, 1, (d, d)), scale * rng.uniform(-1, 1, (d, d))


def commuting_pair(rng, d):
    """A1 as a random quadratic polynomial in A0."""
    A0 = rng.uniform(-1, 1, (d, d))
    c = rng.uniform(-1, 1, 3)
    return A0, c[0] * np.eye(d) + c[1] * A0 + c[2] * A0 @ A0


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
