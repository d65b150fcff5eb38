import math

import pytest

from evcharge.scenario import EVSpec, ScenarioConfig

E_STAR = 33_696_000.0


def make_ev(i, arrival=0.0, demand=E_STAR, parking=30_000.0, tolerance=math.inf,
            accept=150_000.0, leave_after=None):
    return EVSpec(i, float(arrival), tolerance, parking, demand, accept, leave_after)


@pytest.fixture
def one_fcc():
    return ScenarioConfig(ev_count=1, cc_count=1, cc_kind="FCC").validate()


@pytest.fixture
def one_scc():
    return ScenarioConfig(ev_count=2, cc_count=1, cc_kind="SCC").validate()


# one line per acceptance criterion, echoed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
