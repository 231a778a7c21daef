import sys
import warnings

import pytest

from indefbvp.census import run_two_solutions
from indefbvp.integrator import ProblemParams
from indefbvp.nonlinearity import make_builtin
from indefbvp.solver import BoundaryCondition
from indefbvp.weight import figure1_weight, figure2_weight


@pytest.fixture(scope="session")
def g_dom():
    return make_builtin("logistic_dominant")


@pytest.fixture(scope="session")
def g_hap():
    return make_builtin("logistic_haploid")


@pytest.fixture(scope="session")
def fig1(g_dom):
    return ProblemParams(1.0, 12.0, 80.0, figure1_weight(), g_dom)


@pytest.fixture(scope="session")
def fig2n(g_dom):
    return ProblemParams(1.0, 12.0, 12.0, figure2_weight("neumann"), g_dom)


@pytest.fixture(scope="session")
def fig2p(g_dom):
    return ProblemParams(1.0, 12.0, 12.0, figure2_weight("periodic"), g_dom)


@pytest.fixture(scope="session")
def two_neumann(fig2n):
    return run_two_solutions(fig2n, 0.5, BoundaryCondition("neumann"))


@pytest.fixture(scope="session")
def two_periodic(fig2p):
    return run_two_solutions(fig2p, 0.5, BoundaryCondition("periodic"))


@pytest.fixture(autouse=True)
def _quiet_threshold_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="census parameters do not satisfy")
        warnings.filterwarnings("ignore", message="mu <= mu_sharp")
        yield


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results, key=lambda k: (int(k.split(".")[0]), k)):
        ok, detail = results[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
