import numpy as np
import pytest
from hypothesis import strategies as st

from gngarch.network import NetworkTopology, from_edges

# Four-node example graph, 0-based: 1-2, 1-3, 1-4, 2-4, 3-4 in 1-based labels.
EXAMPLE_EDGES = [(0, 1), (0, 2), (0, 3), (1, 3), (2, 3)]


@pytest.fixture
def example_graph() -> NetworkTopology:
    return from_edges(4, EXAMPLE_EDGES)


def random_graph(rng, d, p=0.4) -> NetworkTopology:
    A = np.triu(rng.random((d, d)) < p, 1)
    return NetworkTopology.from_adjacency((A | A.T).astype(int))


@st.composite
def graphs(draw, min_d=1, max_d=8):
    d = draw(st.integers(min_d, max_d))
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs))) if pairs else []
    return from_edges(d, chosen)


# --- acceptance report -----------------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def record(number: int, title: str, passed: bool, detail: str) -> bool:
    """Store and print one PASS/FAIL line for an acceptance criterion."""
    line = f"[{'PASS' if passed else 'FAIL'}] {number:2d} {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
