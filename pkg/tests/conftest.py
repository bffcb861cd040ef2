import pytest
from hypothesis import HealthCheck, settings

from fdlab.exponents import Params
from fdlab.steady_states import PhiSolution

settings.register_profile("fdlab", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("fdlab")


@pytest.fixture(scope="session")
def p20_3():
    return Params(20, 3.0)


@pytest.fixture(scope="session")
def p20_14():
    return Params(20, 1.4)


@pytest.fixture(scope="session")
def phi1(p20_3):
    return PhiSolution(p20_3, 1.0, 1e4)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
