import random

import pytest

from incmanifold.checks import brute_force_delaunay_violations, structure_violations
from incmanifold.triangulation import INFINITE, Triangulation

ACCEPTANCE_KEY = pytest.StashKey[list]()

UNIT_TET = ((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))


def random_points(n, seed=0, scale=10.0):
    rng = random.Random(seed)
    return [(rng.uniform(0, scale), rng.uniform(0, scale), rng.uniform(0, scale)) for _ in range(n)]


def build(points):
    t = Triangulation()
    ids = [t.insert(p)[0] for p in points]
    return t, ids


def cell_shapes(t):
    """Finite cells as a set of vertex-position sets (id-free)."""
    return {frozenset(t.points[x] for x in c.v) for c in t.finite_cells()}


def assert_valid(t):
    assert structure_violations(t) == []
    cells = [c.v for c in t.cells.values()]
    assert brute_force_delaunay_violations(t.points, cells) == 0


def hole_boundary(t, ev_cells):
    """Facets of a cell set that are not shared inside the set, as position sets."""
    count = {}
    for v in ev_cells:
        for i in range(4):
            key = frozenset(v[k] for k in range(4) if k != i)
            count[key] = count.get(key, 0) + 1
    return {k for k, n in count.items() if n == 1}


@pytest.fixture
def unit_tet():
    return build(UNIT_TET)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria")


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
