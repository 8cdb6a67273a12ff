import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tollopt import Commodity, Edge, PolyLatency, RoutingGame, validate_game


def make_parallel(latencies, demand=1.0):
    """Parallel-link game; a latency is a coefficient tuple."""
    edges = tuple(
        Edge(
            f"e{i}",
            "s",
            "t",
            PolyLatency(tuple(c), constant=not any(a > 0 for a in c[1:])),
        )
        for i, c in enumerate(latencies)
    )
    return validate_game(
        RoutingGame(("s", "t"), edges, (Commodity("s", "t", demand),))
    )


def make_braess(demand=1.0):
    edges = (
        Edge("e0", "s", "v", PolyLatency((0.0, 1.0))),
        Edge("e1", "s", "w", PolyLatency((1.0,), constant=True)),
        Edge("e2", "v", "t", PolyLatency((1.0,), constant=True)),
        Edge("e3", "w", "t", PolyLatency((0.0, 1.0))),
        Edge("e4", "v", "w", PolyLatency((0.0,), constant=True)),
    )
    return validate_game(
        RoutingGame(("s", "v", "w", "t"), edges, (Commodity("s", "t", demand),))
    )


def random_parallel(m, rng, bound=1.5, quadratic=False):
    lats = []
    for _ in range(m):
        a0 = round(float(rng.uniform(0.0, bound / 2)), 6)
        a1 = round(float(rng.uniform(0.3, bound)), 6)
        if quadratic and rng.random() < 0.5:
            lats.append((a0, a1, round(float(rng.uniform(0.0, bound / 2)), 6)))
        else:
            lats.append((a0, a1))
    return make_parallel(lats)


def random_dag_game(n, m_target, k, rng, bound=1.5):
    pairs = {(i, i + 1) for i in range(n - 1)}
    attempts = 0
    while len(pairs) < m_target and attempts < 20 * m_target:
        attempts += 1
        i = int(rng.integers(0, n - 1))
        j = int(rng.integers(i + 1, n))
        pairs.add((i, j))
    ordered = sorted(pairs)
    edges = tuple(
        Edge(
            f"e{idx}",
            f"v{i}",
            f"v{j}",
            PolyLatency(
                (
                    round(float(rng.uniform(0.0, bound / 2)), 6),
                    round(float(rng.uniform(0.3, bound)), 6),
                )
            ),
        )
        for idx, (i, j) in enumerate(ordered)
    )
    coms = [Commodity("v0", f"v{n-1}", 1.0)]
    if k == 2:
        coms.append(Commodity("v0", f"v{n-2}", 0.7))
    return validate_game(
        RoutingGame(tuple(f"v{i}" for i in range(n)), edges, tuple(coms))
    )


@pytest.fixture
def pigou():
    return make_parallel([(0.0, 1.0), (1.0,)])


@pytest.fixture
def fig1_l1():
    return make_parallel([(0.0, 1.0), (0.0,)])


@pytest.fixture
def fig1_l2():
    return make_parallel([(1.0,), (0.0, 1.0)])


@pytest.fixture
def braess():
    return make_braess()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
