import pytest

from gwimoments import _accel
from gwimoments.distributions import (
    Bernoulli,
    Deterministic,
    DiscretePareto,
    OffspringSpec,
    Poisson,
    independent,
    joint,
)
from gwimoments.process import GWIModel


def single_type(p=0.5, lam=1.0):
    """Bernoulli(p) offspring, Poisson(lam) immigration."""
    return GWIModel(OffspringSpec((independent(Bernoulli(p)),)), independent(Poisson(lam)))


def worked_model():
    """Bernoulli(0.5) offspring, exactly one immigrant per generation."""
    return GWIModel(OffspringSpec((independent(Bernoulli(0.5)),)), independent(Deterministic(1)))


def two_type(immigration=None):
    """M = [[0.5, 0.2], [0, 0.3]]; default E[B] = (1, 0)."""
    off = OffspringSpec((
        independent(Poisson(0.5), Poisson(0.2)),
        independent(Deterministic(0), Poisson(0.3)),
    ))
    return GWIModel(off, immigration or joint([((1, 0), 1.0)]))


def periodic(lam=20.0):
    """M = [[0, 2], [0.05, 0]]: ||M|| = 2, rho = sqrt(0.1)."""
    off = OffspringSpec((
        independent(Deterministic(0), Poisson(2.0)),
        independent(Bernoulli(0.05), Deterministic(0)),
    ))
    return GWIModel(off, independent(Poisson(lam), Poisson(lam)))


def pareto_immigration(beta=1.5, lam=0.5):
    return GWIModel(OffspringSpec((independent(Poisson(lam)),)), independent(DiscretePareto(beta)))


@pytest.fixture(params=["numba", "numpy"])
def backend(request, monkeypatch):
    if request.param == "numba" and not _accel.HAS_NUMBA:
        pytest.skip("numba unavailable")
    if request.param == "numpy":
        monkeypatch.setattr(_accel, "HAS_NUMBA", False)
    return request.param


ACCEPTANCE_LINES = []


def record(criterion, name, passed, detail):
    line = f"criterion {criterion} ({name}): {'PASS' if passed else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
