import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def factor_panel(rng, N=40, T=60, K=2, noise=1.0):
    L = rng.standard_normal((N, K))
    F = rng.standard_normal((T, K))
    return L @ F.T + noise * rng.standard_normal((N, T)), F, L


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one summary line per criterion, then assert it."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def report(number, ok, detail):
        lines.append((number, "PASS" if ok else "FAIL", detail))
        assert ok, f"criterion {number}: {detail}"

    def skip(number, reason):
        lines.append((number, "SKIP", reason))
        pytest.skip(reason)

    return report, skip


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, detail in sorted(lines):
        terminalreporter.write_line(f"criterion {number}: {status}  {detail}")
