import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from beamroa.beam_model import BeamParameters, build_model  # noqa: E402

DATA = Path(__file__).parent / "data"

# filled by test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def unit_model():
    return build_model(BeamParameters.unit_beam())


@pytest.fixture(scope="session")
def frozen():
    return json.loads((DATA / "frozen_values.json").read_text())


@pytest.fixture(scope="session")
def unit_optimum(unit_model):
    """Nelder-Mead optimum from (1, 1) with default degrees (shared, ~1.5 min)."""
    from beamroa.roa_optimizer import optimize_ratio

    return optimize_ratio(unit_model, (1.0, 1.0))


@pytest.fixture(scope="session")
def ridge_result(unit_model):
    """Certified result at (1/sqrt(3), sqrt(3)) without running the search."""
    from beamroa.roa_optimizer import build_result, evaluate_pair

    beta, cert = evaluate_pair(unit_model, 1 / np.sqrt(3), np.sqrt(3))
    return build_result(unit_model, cert)


@pytest.fixture(scope="session")
def acceptance():
    """Collector for the one-line acceptance verdicts printed after the run."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
