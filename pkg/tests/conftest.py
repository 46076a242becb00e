from pathlib import Path

import pytest

from evidence_lab import GaussianMeanModel, HypothesisPair

CONFIG_DIR = Path(__file__).resolve().parents[1] / "src" / "evidence_lab" / "configs"

# Filled by tests/test_acceptance.py; echoed at the end of the session.
ACCEPTANCE_LINES = []


@pytest.fixture
def model():
    return GaussianMeanModel()


@pytest.fixture
def point_pair():
    return HypothesisPair.points(0.0, 1.0)


@pytest.fixture
def config_dir():
    return CONFIG_DIR


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
