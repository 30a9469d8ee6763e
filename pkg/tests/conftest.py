import math

import pytest

from tempered_exit.process_model import AngularDensity

THREE_PIECE = AngularDensity.piecewise(
    [(0.0, math.pi / 2, 1 / (3 * math.pi)), (math.pi / 2, math.pi, 1 / math.pi), (math.pi, 2 * math.pi, 1 / (3 * math.pi))]
)
HALF_SPLIT = AngularDensity.piecewise([(0.0, math.pi, 1 / (4 * math.pi)), (math.pi, 2 * math.pi, 3 / (4 * math.pi))])


# one line per acceptance criterion, echoed in the terminal summary
CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    def record(line: str) -> None:
        CRITERIA.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)
