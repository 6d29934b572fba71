from __future__ import annotations

import copy

import numpy as np
import pytest

from aporosim.config import default_scenario
from aporosim.core import AgentProfile, AgentState, Status
from aporosim.norms import load_norms
from aporosim.population import load_demographics


@pytest.fixture(scope="session")
def _scenario():
    return default_scenario()


@pytest.fixture
def scenario(_scenario):
    """A private copy of the shipped scenario, safe to mutate."""
    return copy.deepcopy(_scenario)


@pytest.fixture(scope="session")
def norms():
    return load_norms("default.norms")


@pytest.fixture(scope="session")
def demographics():
    return load_demographics("barcelona4.demo")


def make_agent(
    id=0,
    status=Status.EMPLOYED,
    wealth=1000,
    home=5,
    nsl=None,
    needs=("food", "shelter"),
    income=2000,
    rent=800,
    age=40,
    **kw,
) -> AgentState:
    if status is Status.HOMELESS:
        home = None
    profile = AgentProfile(id=id, gender="female", age=age, district="Gracia", home_location=home,
                           income=income, rent=rent)
    if nsl is None:
        nsl = {n: 0.5 for n in needs}
    prison = kw.pop("prison_steps_remaining", 120 if status is Status.IMPRISONED else 0)
    return AgentState(profile=profile, status=status, wealth=wealth, location=home if home is not None else 0,
                      nsl=dict(nsl), prison_steps_remaining=prison, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed again at the end of the session
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
