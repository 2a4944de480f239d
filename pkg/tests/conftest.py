import math

import pytest
from hypothesis import HealthCheck, settings

from swingup.core import BlochState, integrate
from swingup.pulses import FmGaussian

settings.register_profile(
    "swingup",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("swingup")


@pytest.fixture(scope="session", autouse=True)
def compiled_kernels():
    """Trigger JIT compilation once so timed tests measure the numerics."""
    spec = FmGaussian(math.pi, 1.0)
    integrate(BlochState(), spec, *spec.window())
    yield


_CRITERIA = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion.

    The lines are printed together at the end of the session.
    """
    lines = request.config.stash.setdefault(_CRITERIA, {})

    def record(number, title, ok, detail):
        lines[number] = f"criterion {number:2d}  {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_CRITERIA, {})
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
