"""Zero-order minimization of total latency over the feasible-flow polytope.

The only access to the hidden cost function is a value oracle assembled
from toll enforcement: to price a flow, cancel its cycles, search for
tolls enforcing it to within delta/(2mK^2), and read the total latency of
one final query.  The Lipschitz constant 2mK^2 of the cost in the
aggregate infinity norm turns that flow accuracy into a cost error of at
most delta.

On top of that delta-accurate value oracle the minimizer runs projected
descent in the affine hull of the polytope: central finite differences
along an orthonormal basis of the per-commodity conservation null spaces
estimate the gradient, iterates are pulled toward a strictly positive
reference flow before probing so both probe arms stay feasible, and an
away-step conditional-gradient routine performs Euclidean projections.
When descent stalls while the estimated gradient is still large, a
reduced-space ellipsoid with gradient cuts takes over.  The best sampled
flow is tracked globally, so the reported cost never regresses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy.linalg import null_space

from .ellipsoid import Ellipsoid, NumericBreakdown, unit_ball_log_volume
from .enforcement import (
    EnforcementConfig,
    EnforcementStatus,
    enforce_flow,
)
from .game import FlowVector, GameSkeleton, TollVector, acyclic_reduce, is_feasible
from .oracle import EquilibriumOracle, OracleMode
from .paths import dag_order, dag_shortest_path, dijkstra

__all__ = [
    "OracleSampleFailed",
    "OptConfig",
    "CostOracleSample",
    "OptimizationReport",
    "zero_order_cost_oracle",
    "project_to_polytope",
    "estimate_gradient",
    "affine_hull_basis",
    "reference_flow",
    "minimize_total_latency",
    "compute_optimal_tolls",
    "SampleEngine",
]


class OracleSampleFailed(RuntimeError):
    """Toll enforcement could not realize a requested flow."""


@dataclass(frozen=True)
class OptConfig:
    """Targets for the zero-order minimizer.

    ``delta`` defaults to epsilon / (8 N^2) where N = mk, keeping the
    value-oracle error a configured polynomial factor below the optimality
    target; ``fd_step`` defaults to sqrt(delta), balancing oracle error
    delta/h against curvature error O(h).
    """

    epsilon: float
    delta: float | None = None
    theta: float = 1e-3  # interior mix toward the reference flow
    fd_step: float | None = None
    max_iterations: int = 60
    max_queries: int | None = None
    p_factor: float | None = None  # defaults to 8 N^2

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")

    def resolved(self, skeleton: GameSkeleton) -> "_ResolvedOpt":
        N = max(1, skeleton.constants.N)
        p = self.p_factor if self.p_factor is not None else 8.0 * N * N
        delta = self.delta if self.delta is not None else self.epsilon / p
        if delta > self.epsilon / p * (1 + 1e-12):
            raise ValueError(f"delta must be at most epsilon / {p}")
        h = self.fd_step if self.fd_step is not None else math.sqrt(delta)
        return _ResolvedOpt(
            epsilon=self.epsilon,
            delta=delta,
            theta=self.theta,
            fd_step=h,
            max_iterations=self.max_iterations,
            max_queries=self.max_queries,
        )


@dataclass(frozen=True)
class _ResolvedOpt:
    epsilon: float
    delta: float
    theta: float
    fd_step: float
    max_iterations: int
    max_queries: int | None


@dataclass(frozen=True)
class CostOracleSample:
    requested_flow: FlowVector  # the cycle-free flow actually enforced
    enforcing_tolls: TollVector
    observed_cost: float
    queries_spent: int


@dataclass(frozen=True)
class OptimizationReport:
    best_flow: FlowVector
    best_cost: float
    final_tolls: TollVector
    total_oracle_queries: int
    iteration_trace: tuple[dict, ...]
    status: str  # CONVERGED or BUDGET_EXHAUSTED


class SampleEngine:
    """Caching zero-order value oracle built from toll enforcement.

    Identical (rounded) flow requests reuse the previous sample; a small
    ellipsoid around the previous enforcing tolls warm-starts the search,
    with an automatic restart from the full toll box when the warm ball
    proves too small.  Warm starts only save queries, never change what
    success means: every success is verified against the oracle.
    """

    def __init__(self, oracle: EquilibriumOracle, delta: float):
        if oracle.mode is not OracleMode.FLOW_AND_COST:
            raise ValueError("the cost oracle needs FLOW_AND_COST mode")
        self.oracle = oracle
        self.delta = float(delta)
        skel = oracle.skeleton
        const = skel.constants
        self.skeleton = skel
        self.delta_enforce = delta / (4.0 * skel.m * const.K**2)
        self.cache: dict[tuple, CostOracleSample] = {}
        self._last: CostOracleSample | None = None

    def sample(self, f: FlowVector) -> CostOracleSample:
        skel = self.skeleton
        reduced = acyclic_reduce(skel, f)
        key = tuple(np.round(reduced.per_commodity, 12).ravel())
        hit = self.cache.get(key)
        if hit is not None:
            return replace(hit, queries_spent=0)
        before = self.oracle.query_count
        cfg = EnforcementConfig(delta=self.delta_enforce)
        result = None
        if self._last is not None:
            d_flow = float(
                np.max(
                    np.abs(
                        reduced.aggregate - self._last.requested_flow.aggregate
                    )
                )
            )
            const = skel.constants
            radius = max(
                4.0 * skel.m * const.K * d_flow,
                200.0 * const.K * self.delta_enforce,
                1e-4 * const.T_max,
            )
            if radius < const.T_max:
                warm = Ellipsoid.ball(self._last.enforcing_tolls.values, radius)
                attempt = enforce_flow(self.oracle, reduced, cfg, initial=warm)
                if attempt.status is EnforcementStatus.SUCCESS:
                    result = attempt
        if result is None:
            result = enforce_flow(self.oracle, reduced, cfg)
        if result.status is not EnforcementStatus.SUCCESS:
            raise OracleSampleFailed(
                f"no tolls found for the requested flow "
                f"(best deviation {result.achieved_deviation:.3e})"
            )
        final = self.oracle.query(result.tolls)
        spent = self.oracle.query_count - before
        sample = CostOracleSample(
            requested_flow=reduced,
            enforcing_tolls=result.tolls,
            observed_cost=float(final.total_cost),
            queries_spent=spent,
        )
        self.cache[key] = sample
        self._last = sample
        return sample


def zero_order_cost_oracle(
    oracle: EquilibriumOracle, f: FlowVector, delta: float
) -> CostOracleSample:
    """One-shot delta-accurate total-latency sample at a feasible flow."""
    return SampleEngine(oracle, delta).sample(f)


# ---------------------------------------------------------------------------
# polytope geometry: usable edges, affine-hull basis, reference flow,
# Euclidean projection
# ---------------------------------------------------------------------------


def _usable_edges(skel: GameSkeleton, i: int) -> np.ndarray:
    """Edges lying on some source-sink path of commodity i."""
    vi = skel.vertex_index
    com = skel.commodities[i]
    n = len(skel.vertices)
    fwd = [False] * n
    fwd[vi[com.source]] = True
    stack = [vi[com.source]]
    adj = skel.adjacency_out
    while stack:
        v = stack.pop()
        for _, head in adj[v]:
            if not fwd[head]:
                fwd[head] = True
                stack.append(head)
    radj: list[list[int]] = [[] for _ in range(n)]
    tails = [vi[t] for t in skel.edge_tails]
    heads = [vi[h] for h in skel.edge_heads]
    for e in range(skel.m):
        radj[heads[e]].append(tails[e])
    bwd = [False] * n
    bwd[vi[com.sink]] = True
    stack = [vi[com.sink]]
    while stack:
        v = stack.pop()
        for u in radj[v]:
            if not bwd[u]:
                bwd[u] = True
                stack.append(u)
    return np.array(
        [fwd[tails[e]] and bwd[heads[e]] for e in range(skel.m)], dtype=bool
    )


def affine_hull_basis(skel: GameSkeleton) -> np.ndarray:
    """Orthonormal directions spanning the polytope's affine hull.

    Shape (D', k, m): direction j lives in commodity block j's usable
    edges and satisfies flow conservation at every vertex, so adding a
    multiple of it to a feasible flow preserves all equalities.
    """
    vi = skel.vertex_index
    tails = [vi[t] for t in skel.edge_tails]
    heads = [vi[h] for h in skel.edge_heads]
    n = len(skel.vertices)
    dirs: list[np.ndarray] = []
    for i in range(skel.k):
        usable = np.flatnonzero(_usable_edges(skel, i))
        if usable.size == 0:
            continue
        A = np.zeros((n, usable.size))
        for col, e in enumerate(usable):
            A[tails[e], col] += 1.0
            A[heads[e], col] -= 1.0
        Z = null_space(A)
        for col in range(Z.shape[1]):
            v = np.zeros((skel.k, skel.m))
            v[i, usable] = Z[:, col]
            dirs.append(v)
    if not dirs:
        return np.zeros((0, skel.k, skel.m))
    return np.stack(dirs)


def reference_flow(skel: GameSkeleton) -> FlowVector:
    """Strictly positive feasible flow on every usable edge.

    For each commodity, every usable edge gets a witness path (shortest-hop
    source-to-tail, the edge, shortest-hop head-to-sink) and the demand is
    split uniformly over the distinct witnesses.
    """
    vi = skel.vertex_index
    adj = skel.adjacency_out
    tails = [vi[t] for t in skel.edge_tails]
    heads = [vi[h] for h in skel.edge_heads]
    out = np.zeros((skel.k, skel.m))
    ones = np.ones(skel.m)
    for i, com in enumerate(skel.commodities):
        usable = np.flatnonzero(_usable_edges(skel, i))
        dist_s, pred_s = dijkstra(adj, ones, vi[com.source])
        # reverse hop distances to the sink
        radj: list[list[tuple[int, int]]] = [[] for _ in skel.vertices]
        for e in range(skel.m):
            radj[heads[e]].append((e, tails[e]))
        dist_t, pred_t = dijkstra(tuple(tuple(x) for x in radj), ones, vi[com.sink])
        witnesses: list[tuple[int, ...]] = []
        seen: set[tuple[int, ...]] = set()
        for e in usable:
            prefix: list[int] = []
            v = tails[e]
            while v != vi[com.source]:
                pe = pred_s[v]
                prefix.append(pe)
                v = tails[pe]
            prefix.reverse()
            suffix: list[int] = []
            v = heads[e]
            while v != vi[com.sink]:
                pe = pred_t[v]
                suffix.append(pe)
                v = heads[pe]
            path = tuple(prefix) + (e,) + tuple(suffix)
            if path not in seen:
                seen.add(path)
                witnesses.append(path)
        share = com.demand / max(1, len(witnesses))
        for path in witnesses:
            for e in path:
                out[i, e] += share
    return FlowVector(out)


def project_to_polytope(
    skel: GameSkeleton, x, gap_target: float = 1e-10, max_iterations: int = 2000
) -> FlowVector:
    """Euclidean projection onto the feasible-flow polytope.

    Runs an away-step conditional gradient per commodity over the path
    polytope (linear minimization is a DAG shortest path, which tolerates
    the negative costs a quadratic objective produces).  Deterministic;
    already-feasible points are returned unchanged.
    """
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    candidate = FlowVector(pts)
    if pts.shape == (skel.k, skel.m) and is_feasible(skel, candidate, tol=1e-12):
        return candidate
    if dag_order(skel) is None:
        raise ValueError("projection requires an acyclic graph")
    out = np.zeros((skel.k, skel.m))
    for i, com in enumerate(skel.commodities):
        target = pts[i]
        d_i = com.demand
        path0, _ = dag_shortest_path(skel, np.ones(skel.m), com.source, com.sink)
        weights: dict[tuple[int, ...], float] = {path0: 1.0}
        f = np.zeros(skel.m)
        for e in path0:
            f[e] += d_i
        for _ in range(max_iterations):
            grad = 2.0 * (f - target)
            fw_path, _ = dag_shortest_path(skel, grad, com.source, com.sink)
            v_fw = np.zeros(skel.m)
            for e in fw_path:
                v_fw[e] += d_i
            away_path = max(
                weights, key=lambda p: (sum(grad[e] for e in p), p)
            )
            v_away = np.zeros(skel.m)
            for e in away_path:
                v_away[e] += d_i
            gap_fw = float(np.dot(grad, f - v_fw))
            if gap_fw <= gap_target:
                break
            gap_away = float(np.dot(grad, v_away - f))
            if gap_fw >= gap_away:
                d_dir = v_fw - f
                gamma_max = 1.0
                is_away = False
            else:
                d_dir = f - v_away
                alpha_away = weights[away_path]
                if alpha_away >= 1.0:
                    d_dir = v_fw - f
                    gamma_max = 1.0
                    is_away = False
                else:
                    gamma_max = alpha_away / (1.0 - alpha_away)
                    is_away = True
            denom = float(np.dot(d_dir, d_dir))
            if denom <= 0:
                break
            gamma = min(gamma_max, max(0.0, -float(np.dot(f - target, d_dir)) / denom))
            if gamma <= 0:
                break
            if is_away:
                for p in weights:
                    weights[p] *= 1.0 + gamma
                weights[away_path] -= gamma
                if weights[away_path] <= 1e-15:
                    del weights[away_path]
            else:
                for p in weights:
                    weights[p] *= 1.0 - gamma
                weights[fw_path] = weights.get(fw_path, 0.0) + gamma
            f = np.zeros(skel.m)
            for p, w in weights.items():
                for e in p:
                    f[e] += w * d_i
        out[i] = f
    return FlowVector(out)


# ---------------------------------------------------------------------------
# finite-difference gradients
# ---------------------------------------------------------------------------


def _fd_gradient(
    value_fn: Callable[[FlowVector], float],
    skel: GameSkeleton,
    basis: np.ndarray,
    f: FlowVector,
    h: float,
) -> np.ndarray:
    """Central differences along the hull basis, arms shrunk to stay in
    the polytope (the secant then spans the actual chord)."""
    X = f.per_commodity
    grads = np.zeros(basis.shape[0])
    for j in range(basis.shape[0]):
        v = basis[j]
        neg = v < -1e-15
        pos = v > 1e-15
        t_plus = float(np.min(X[neg] / -v[neg])) if neg.any() else math.inf
        t_minus = float(np.min(X[pos] / v[pos])) if pos.any() else math.inf
        a_plus = min(h, 0.95 * t_plus)
        a_minus = min(h, 0.95 * t_minus)
        span = a_plus + a_minus
        if span <= 1e-12:
            grads[j] = 0.0
            continue
        hi = value_fn(FlowVector(X + a_plus * v))
        lo = value_fn(FlowVector(X - a_minus * v))
        grads[j] = (hi - lo) / span
    return grads


def estimate_gradient(
    oracle: EquilibriumOracle,
    f: FlowVector,
    h: float,
    delta: float,
    basis: np.ndarray | None = None,
) -> np.ndarray:
    """Gradient estimate of total latency at an interior flow.

    Component error is bounded by delta/h plus the curvature term K''h;
    both shrink under the default h = sqrt(delta).
    """
    skel = oracle.skeleton
    if basis is None:
        basis = affine_hull_basis(skel)
    engine = SampleEngine(oracle, delta)
    return _fd_gradient(lambda g: engine.sample(g).observed_cost, skel, basis, f, h)


# ---------------------------------------------------------------------------
# the minimizer
# ---------------------------------------------------------------------------


def _lift(basis: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    return np.tensordot(coeffs, basis, axes=(0, 0))


def _estimated_fw_gap(skel: GameSkeleton, G: np.ndarray, f: FlowVector) -> float:
    gap = 0.0
    for i, com in enumerate(skel.commodities):
        _, dist = dag_shortest_path(skel, G[i], com.source, com.sink)
        gap += float(np.dot(G[i], f.per_commodity[i])) - com.demand * dist
    return gap


def minimize_total_latency(
    oracle: EquilibriumOracle,
    skeleton: GameSkeleton,
    cfg: OptConfig,
) -> OptimizationReport:
    """Find a feasible flow whose total latency is within epsilon of optimal.

    Projected descent on finite-difference gradients, with the globally
    best sample tracked across every probe.  Stops on an estimated-gap
    certificate, a persistent stall, or the iteration/query budget; the
    report carries the best flow either way, with ``status`` saying which.
    """
    if tuple(skeleton.edge_ids) != tuple(oracle.skeleton.edge_ids):
        raise ValueError("skeleton does not match the oracle's game")
    res = cfg.resolved(skeleton)
    engine = SampleEngine(oracle, res.delta)
    basis = affine_hull_basis(skeleton)
    f_ref = reference_flow(skeleton)
    queries_start = oracle.query_count
    trace: list[dict] = []

    def spent() -> int:
        return oracle.query_count - queries_start

    def over_budget() -> bool:
        return res.max_queries is not None and spent() >= res.max_queries

    best = engine.sample(f_ref)
    current = best
    status = "BUDGET_EXHAUSTED"
    alpha = 0.25
    stall = 0
    for it in range(1, res.max_iterations + 1):
        if over_budget():
            break
        f = current.requested_flow
        mixed = FlowVector(
            (1.0 - res.theta) * f.per_commodity + res.theta * f_ref.per_commodity
        )
        try:
            g_hat = _fd_gradient(
                lambda x: engine.sample(x).observed_cost,
                skeleton,
                basis,
                mixed,
                res.fd_step,
            )
        except OracleSampleFailed:
            break
        G = _lift(basis, g_hat)
        est_gap = _estimated_fw_gap(skeleton, G, f)
        gnorm = float(np.linalg.norm(g_hat))
        improved = False
        tried: list[tuple[float, CostOracleSample]] = []
        for a in (2.0 * alpha, alpha, 0.25 * alpha):
            if over_budget():
                break
            cand_pt = project_to_polytope(
                skeleton, f.per_commodity - a * G
            )
            try:
                cand = engine.sample(cand_pt)
            except OracleSampleFailed:
                continue
            tried.append((a, cand))
            if cand.observed_cost < best.observed_cost:
                best = cand
        if tried:
            a_win, cand_win = min(tried, key=lambda t: t[1].observed_cost)
            if cand_win.observed_cost < current.observed_cost + 0.5 * res.delta:
                current = cand_win
                alpha = max(min(a_win * 1.5, 4.0), 1e-4)
                improved = True
        if not improved:
            alpha = max(alpha * 0.25, 1e-4)
            stall += 1
        else:
            stall = 0
        trace.append(
            {
                "iteration": it,
                "cost": current.observed_cost,
                "best_cost": best.observed_cost,
                "step": alpha,
                "estimated_gap": est_gap,
                "grad_norm": gnorm,
                "queries": spent(),
            }
        )
        if est_gap <= res.epsilon / 2.0 and it >= 2:
            status = "CONVERGED"
            break
        if stall >= 3:
            if est_gap <= res.epsilon:
                status = "CONVERGED"
            else:
                fallback_best, fb_trace = _ellipsoid_fallback(
                    engine, skeleton, basis, f_ref, best, res, over_budget
                )
                trace.extend(fb_trace)
                if fallback_best.observed_cost < best.observed_cost:
                    best = fallback_best
                status = "CONVERGED" if not over_budget() else "BUDGET_EXHAUSTED"
            break
    return OptimizationReport(
        best_flow=best.requested_flow,
        best_cost=best.observed_cost,
        final_tolls=best.enforcing_tolls,
        total_oracle_queries=spent(),
        iteration_trace=tuple(trace),
        status=status,
    )


def _ellipsoid_fallback(
    engine: SampleEngine,
    skel: GameSkeleton,
    basis: np.ndarray,
    f_ref: FlowVector,
    start: CostOracleSample,
    res: _ResolvedOpt,
    over_budget: Callable[[], bool],
) -> tuple[CostOracleSample, list[dict]]:
    """Reduced-space ellipsoid with finite-difference gradient cuts.

    Engaged only when descent stalls with a large estimated gap; capped
    at a modest iteration count since each cut costs 2 D' samples.
    """
    D = basis.shape[0]
    best = start
    trace: list[dict] = []
    if D == 0:
        return best, trace
    diff = start.requested_flow.per_commodity - f_ref.per_commodity
    y0 = np.tensordot(basis, diff, axes=([1, 2], [0, 1]))
    sum_d = skel.constants.total_demand
    R = 2.0 * math.sqrt(max(1.0, sum_d * sum_d * skel.m))
    E = Ellipsoid.ball(y0, R)
    floor = unit_ball_log_volume(D) + D * math.log(
        max(res.epsilon / (8.0 * skel.m * skel.constants.K), 1e-12)
    )
    for it in range(1, 30 * D + 1):
        if over_budget():
            break
        raw = f_ref.per_commodity + _lift(basis, E.center)
        viol = raw < -1e-12
        if viol.any():
            idx = np.unravel_index(int(np.argmin(raw)), raw.shape)
            g = basis[:, idx[0], idx[1]]
            if not np.any(g != 0.0):
                break
        else:
            f_c = project_to_polytope(skel, raw)
            try:
                center_sample = engine.sample(f_c)
            except OracleSampleFailed:
                break
            if center_sample.observed_cost < best.observed_cost:
                best = center_sample
            mixed = FlowVector(
                (1.0 - res.theta) * f_c.per_commodity
                + res.theta * f_ref.per_commodity
            )
            try:
                g_hat = _fd_gradient(
                    lambda x: engine.sample(x).observed_cost,
                    skel,
                    basis,
                    mixed,
                    res.fd_step,
                )
            except OracleSampleFailed:
                break
            if float(np.linalg.norm(g_hat)) <= 0.0:
                break
            g = -g_hat
        try:
            E = E.update(g)
        except NumericBreakdown:
            break
        trace.append(
            {
                "iteration": f"fallback-{it}",
                "best_cost": best.observed_cost,
                "log_volume": E.log_volume(),
            }
        )
        if E.log_volume() < floor:
            break
    return best, trace


def compute_optimal_tolls(
    oracle: EquilibriumOracle,
    skeleton: GameSkeleton,
    cfg: OptConfig,
) -> tuple[TollVector, OptimizationReport]:
    """Minimize total latency, then enforce the best flow tightly.

    The final enforcement runs at tolerance epsilon / (4mK^2), so the
    equilibrium induced by the returned tolls costs at most epsilon more
    than the best sampled flow, i.e. at most OPT + 2 epsilon overall.
    """
    report = minimize_total_latency(oracle, skeleton, cfg)
    const = skeleton.constants
    delta_fin = cfg.epsilon / (4.0 * skeleton.m * const.K**2)
    before = oracle.query_count
    final = enforce_flow(oracle, report.best_flow, EnforcementConfig(delta=delta_fin))
    if final.status is not EnforcementStatus.SUCCESS:
        raise OracleSampleFailed("final enforcement of the best flow failed")
    extra = oracle.query_count - before
    report = replace(
        report,
        final_tolls=final.tolls,
        total_oracle_queries=report.total_oracle_queries + extra,
    )
    return final.tolls, report
