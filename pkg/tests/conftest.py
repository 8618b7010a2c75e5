import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def cantilever_fact():
    from signreg.fem import discretize
    from signreg.problem import cantilever
    return discretize(cantilever(), 64, [0.25, 0.5, 0.75])


@pytest.fixture(scope="session")
def prop11_fact():
    from signreg.fem import discretize
    from signreg.problem import proposition11
    return discretize(proposition11(), 128)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(mod.RESULTS, key=lambda k: int(k[1:])):
            terminalreporter.write_line(mod.RESULTS[key])
