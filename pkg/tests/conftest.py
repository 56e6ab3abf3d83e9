import functools
import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from hexpde.estimation import estimate
from hexpde.problems import solve_problem

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ORACLES = json.loads((Path(__file__).with_name("oracles.json")).read_text())


@functools.lru_cache(maxsize=None)
def solved(problem, size, degree=1, solver="direct"):
    """Cached pipeline runs shared across test modules."""
    return solve_problem(problem, size, degree, solver)


@functools.lru_cache(maxsize=None)
def estimated(problem, size, strategy, correction):
    sol = solved(problem, size)
    return estimate(sol.mesh, sol.u, sol.problem.source, strategy, correction)


@pytest.fixture(scope="session")
def oracles():
    return ORACLES


_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    name = report.nodeid.split("::")[-1]
    if "test_acceptance.py" in report.nodeid and name.startswith("test_criterion_"):
        _ACCEPTANCE[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        tr.write_line(f"{'PASS' if _ACCEPTANCE[name] == 'passed' else 'FAIL'}  {name}")
