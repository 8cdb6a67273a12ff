"""Shortest paths and path decompositions on routing-game graphs.

Paths are tuples of edge indices.  Tie-breaking is deterministic: adjacency
lists are in edge-id order and a relaxation only replaces a label on strict
improvement, so among equal-cost routes the one reached through earlier
edge ids wins.
"""

from __future__ import annotations

import heapq

import numpy as np

__all__ = [
    "Unreachable",
    "dijkstra",
    "shortest_path",
    "dag_order",
    "dag_shortest_path",
    "decompose_paths",
]


class Unreachable(ValueError):
    """No directed path exists between the requested endpoints."""


def dijkstra(
    adjacency: tuple[tuple[tuple[int, int], ...], ...],
    costs,
    source: int,
) -> tuple[list[float], list[int]]:
    """Single-source distances under nonnegative edge costs.

    Returns (dist, pred_edge); pred_edge[v] is the edge index used to reach
    v, or -1.
    """
    n = len(adjacency)
    dist = [float("inf")] * n
    pred = [-1] * n
    dist[source] = 0.0
    heap: list[tuple[float, int]] = [(0.0, source)]
    while heap:
        d, v = heapq.heappop(heap)
        if d > dist[v]:
            continue
        for e_idx, head in adjacency[v]:
            nd = d + costs[e_idx]
            if nd < dist[head]:
                dist[head] = nd
                pred[head] = e_idx
                heapq.heappush(heap, (nd, head))
    return dist, pred


def _trace(pred: list[int], tails: list[int], source: int, target: int) -> tuple[int, ...]:
    path: list[int] = []
    v = target
    while v != source:
        e = pred[v]
        if e < 0:
            raise Unreachable(f"no path to vertex index {target}")
        path.append(e)
        v = tails[e]
    path.reverse()
    return tuple(path)


def shortest_path(game, edge_costs, s: str, t: str) -> tuple[tuple[int, ...], float]:
    """Min-cost s-t path under the given nonnegative edge costs.

    Works on ``RoutingGame`` and ``GameSkeleton`` alike.  Returns the path
    as edge indices plus its cost.  Raises ``Unreachable``.
    """
    costs = np.asarray(edge_costs, dtype=float)
    if np.any(costs < 0):
        raise ValueError("edge costs must be nonnegative for Dijkstra")
    vi = game.vertex_index
    adj = game.adjacency_out
    tails = _tail_indices(game)
    dist, pred = dijkstra(adj, costs, vi[s])
    ti = vi[t]
    if dist[ti] == float("inf"):
        raise Unreachable(f"{t!r} unreachable from {s!r}")
    return _trace(pred, tails, vi[s], ti), dist[ti]


def _tail_indices(game) -> list[int]:
    vi = game.vertex_index
    if hasattr(game, "edges"):
        return [vi[e.tail] for e in game.edges]
    return [vi[tail] for tail in game.edge_tails]


def _head_indices(game) -> list[int]:
    vi = game.vertex_index
    if hasattr(game, "edges"):
        return [vi[e.head] for e in game.edges]
    return [vi[head] for head in game.edge_heads]


def dag_order(game) -> list[int] | None:
    """Topological vertex order, or None if the graph has a directed cycle."""
    n = len(game.vertices)
    indeg = [0] * n
    adj = game.adjacency_out
    for v in range(n):
        for _, head in adj[v]:
            indeg[head] += 1
    queue = [v for v in range(n) if indeg[v] == 0]
    order: list[int] = []
    i = 0
    while i < len(queue):
        v = queue[i]
        i += 1
        order.append(v)
        for _, head in adj[v]:
            indeg[head] -= 1
            if indeg[head] == 0:
                queue.append(head)
    return order if len(order) == n else None


def dag_shortest_path(
    game, edge_costs, s: str, t: str, order: list[int] | None = None
) -> tuple[tuple[int, ...], float]:
    """Min-cost s-t path on a DAG; edge costs may be negative."""
    if order is None:
        order = dag_order(game)
    if order is None:
        raise ValueError("graph is not acyclic")
    vi = game.vertex_index
    adj = game.adjacency_out
    tails = _tail_indices(game)
    n = len(game.vertices)
    dist = [float("inf")] * n
    pred = [-1] * n
    dist[vi[s]] = 0.0
    for v in order:
        if dist[v] == float("inf"):
            continue
        for e_idx, head in adj[v]:
            nd = dist[v] + edge_costs[e_idx]
            if nd < dist[head]:
                dist[head] = nd
                pred[head] = e_idx
    ti = vi[t]
    if dist[ti] == float("inf"):
        raise Unreachable(f"{t!r} unreachable from {s!r}")
    return _trace(pred, tails, vi[s], ti), dist[ti]


def decompose_paths(
    game, flow_row: np.ndarray, s: str, t: str, tol: float = 1e-12
) -> list[tuple[tuple[int, ...], float]]:
    """Greedy path decomposition of one commodity's edge flow.

    Repeatedly extracts an s-t path through positive-flow edges (earliest
    edge id first) and routes the bottleneck amount along it.  Leftover
    circulation, if any, is not reported.
    """
    residual = np.array(flow_row, dtype=float, copy=True)
    scale = max(1.0, float(residual.max(initial=0.0)))
    cut = tol * scale
    vi = game.vertex_index
    adj = game.adjacency_out
    si, ti = vi[s], vi[t]
    out: list[tuple[tuple[int, ...], float]] = []
    while True:
        # DFS from s following positive residual edges.
        pred = [-1] * len(game.vertices)
        seen = [False] * len(game.vertices)
        seen[si] = True
        stack = [si]
        while stack and not seen[ti]:
            v = stack.pop()
            for e_idx, head in adj[v]:
                if residual[e_idx] > cut and not seen[head]:
                    seen[head] = True
                    pred[head] = e_idx
                    stack.append(head)
        if not seen[ti]:
            break
        tails = _tail_indices(game)
        path = _trace(pred, tails, si, ti)
        amount = min(residual[e] for e in path)
        for e in path:
            residual[e] -= amount
        out.append((path, float(amount)))
    return out
