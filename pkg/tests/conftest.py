from __future__ import annotations

import os
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from rotavg.cycle import CycleProblem
from rotavg.graph import MeasurementGraph
from rotavg.so3 import exp_axis_angle, random_rotations
from rotavg.synth import CycleSpec, generate_cycle

# Example budgets for property-based tests.
SO3_CASES = 1000
MATRIX_CASES = 100

settings.register_profile("default", deadline=None, print_blob=True)
settings.load_profile("default")

DATA_DIR = Path(os.environ.get("ROTAVG_DATA_DIR", Path(__file__).parent / "data"))

# Filled by tests/test_acceptance.py, printed at the end of the session.
ACCEPTANCE_LINES: list[str] = []
# Outcome of every property-based test run in this session, by node id.
PROPERTY_OUTCOMES: dict[str, str] = {}
SESSION_START = time.perf_counter()


def is_property_test(item) -> bool:
    return bool(getattr(getattr(item, "obj", None), "is_hypothesis_test", False))


def pytest_collection_modifyitems(session, config, items):
    for item in items:
        if is_property_test(item):
            item.add_marker(pytest.mark.property)
    # The acceptance module runs last so it can see the property-test outcomes.
    items.sort(key=lambda it: "test_acceptance.py" in it.nodeid)


def pytest_runtest_logreport(report):
    if "property" in report.keywords and (report.when == "call" or report.outcome != "passed"):
        if report.when == "call" or report.nodeid not in PROPERTY_OUTCOMES:
            PROPERTY_OUTCOMES[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
    terminalreporter.write_line(f"session wall time {time.perf_counter() - SESSION_START:.1f} s (budget 120 s)")


def dataset_path(*names: str) -> Path | None:
    for name in names:
        p = DATA_DIR / name
        if p.exists():
            return p
    return None


def rot_z(t: float) -> np.ndarray:
    return exp_axis_angle([0.0, 0.0, 1.0], t)


def rot_x(t: float) -> np.ndarray:
    return exp_axis_angle([1.0, 0.0, 0.0], t)


def noise_free_graph(truth: np.ndarray, edges) -> MeasurementGraph:
    return MeasurementGraph.from_edges(
        truth.shape[0], [(i, j, truth[i] @ truth[j].T) for i, j in edges]
    )


def cycle_edges(n: int) -> list[tuple[int, int]]:
    return [(k, (k + 1) % n) for k in range(n)]


def random_cycle(n: int, sigma: float, seed: int) -> CycleProblem:
    return generate_cycle(CycleSpec(n, sigma, seed))[0]


def haar_cycle(n: int, seed: int) -> CycleProblem:
    """Cycle with fully random (not small-noise) measurements."""
    return CycleProblem(random_rotations(np.random.default_rng(seed), n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
