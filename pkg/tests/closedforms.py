"""Independent reference computations for the test suite.

Deliberately reimplemented from first principles (bisection and brute
force, no shared code with the solver package) so they can serve as
ground truth against the production algorithms.
"""

from __future__ import annotations

import itertools

import numpy as np


def parallel_equilibrium(latencies, tolls, demand=1.0, iters=200):
    """Equilibrium split on parallel links by double bisection.

    ``latencies`` is a list of coefficient tuples (a_0, a_1, ...), each
    strictly increasing.  Finds the common cost level and inverts each
    link's tolled latency at it.
    """

    def val(coeffs, x):
        acc = 0.0
        for a in reversed(coeffs):
            acc = acc * x + a
        return acc

    m = len(latencies)

    def link_flow(e, lam):
        if val(latencies[e], 0.0) + tolls[e] >= lam:
            return 0.0
        lo, hi = 0.0, demand
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if val(latencies[e], mid) + tolls[e] < lam:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    lo = min(val(latencies[e], 0.0) + tolls[e] for e in range(m))
    hi = max(val(latencies[e], demand) + tolls[e] for e in range(m)) + 1.0
    for _ in range(iters):
        lam = 0.5 * (lo + hi)
        if sum(link_flow(e, lam) for e in range(m)) < demand:
            lo = lam
        else:
            hi = lam
    lam = 0.5 * (lo + hi)
    return np.array([link_flow(e, lam) for e in range(m)])


def grid_search_cost(path_edge_lists, latencies, m, demand=1.0, steps=400):
    """Brute-force minimum total latency over splits across given paths.

    Enumerates demand splits on a regular grid (exact for <= 3 paths at
    the given resolution) and evaluates sum_e F_e l_e(F_e) directly.
    """

    def val(coeffs, x):
        acc = 0.0
        for a in reversed(coeffs):
            acc = acc * x + a
        return acc

    def cost_of(split):
        load = [0.0] * m
        for share, edges in zip(split, path_edge_lists):
            for e in edges:
                load[e] += share
        return sum(load[e] * val(latencies[e], load[e]) for e in range(m))

    n_paths = len(path_edge_lists)
    best = float("inf")
    best_split = None
    if n_paths == 1:
        return cost_of([demand]), [demand]
    ticks = [demand * i / steps for i in range(steps + 1)]
    if n_paths == 2:
        for a in ticks:
            c = cost_of([a, demand - a])
            if c < best:
                best, best_split = c, [a, demand - a]
    elif n_paths == 3:
        for a, b in itertools.product(ticks, ticks):
            if a + b <= demand + 1e-12:
                c = cost_of([a, b, demand - a - b])
                if c < best:
                    best, best_split = c, [a, b, demand - a - b]
    else:
        raise ValueError("brute force supports at most 3 paths")
    return best, best_split
