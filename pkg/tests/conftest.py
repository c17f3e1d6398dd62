import numpy as np
import pytest

from fairrange.instance import Instance
from fairrange.metric import from_matrix


def line_instance(clients, facilities, k=1, groups=(), alpha=(), beta=(), caps=None, objective="median",
                  weights=None):
    """Points on a line: ``clients``/``facilities`` map id -> coordinate."""
    pos = {**clients, **facilities}
    ids = list(pos)
    x = np.array([pos[p] for p in ids], dtype=float)
    metric = from_matrix(ids, np.abs(x[:, None] - x[None, :]))
    return Instance.build(k, list(clients), list(facilities), groups, alpha, beta, caps, metric,
                          objective, weights)


@pytest.fixture
def line4():
    return line_instance({"c1": 0, "c2": 3, "c3": 7, "c4": 10}, {"f1": 1, "f2": 6, "f3": 12}, k=3)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
