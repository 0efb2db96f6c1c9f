import pytest
from hypothesis import HealthCheck, settings

from hcl.centroaffine import mu_from_gamma

settings.register_profile("hcl", deadline=None, max_examples=60, derandomize=True, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("hcl")


@pytest.fixture(scope="session")
def half():
    """The cubic bound gamma = 0.5 used throughout the figure data."""
    return mu_from_gamma(0.5)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record the outcome of one acceptance criterion and assert on it."""
    results = request.config.stash.setdefault(ACCEPTANCE_KEY, {})

    def record(number, checks):
        failed = [name for name, ok in checks if not ok]
        results[number] = failed
        assert not failed, f"criterion {number} failed: {failed}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE_KEY, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        failed = results[number]
        line = f"criterion {number}: {'PASS' if not failed else 'FAIL'}"
        terminalreporter.write_line(line + (f" ({', '.join(failed)})" if failed else ""))
