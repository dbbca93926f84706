from importlib import resources
from pathlib import Path

import pytest

from runwaybench.scenario import parse_runway_db

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def lfbo_db():
    text = resources.files("runwaybench").joinpath("data/lfbo_sample_runways.json").read_text()
    return parse_runway_db(text)


@pytest.fixture(scope="session")
def reference_scenario_text():
    return (DATA / "reference_scenario.yaml").read_text()


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
