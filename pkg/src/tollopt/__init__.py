"""Optimal tolls for routing games whose latency functions sit behind a
query oracle: equilibrium computation, toll enforcement by ellipsoid
search, and zero-order minimization of total latency."""

from .ellipsoid import Ellipsoid, NumericBreakdown
from .enforcement import (
    DegenerateCut,
    EnforcementConfig,
    EnforcementResult,
    EnforcementStatus,
    TargetCyclic,
    TargetInfeasible,
    enforce_flow,
    separation_cut,
)
from .equilibrium import (
    EqConfig,
    EquilibriumResult,
    NoConvergence,
    beckmann_potential,
    solve_equilibrium,
    wardrop_violation,
)
from .exact import marginal_cost_tolls, marginal_game, optimal_flow
from .game import (
    Commodity,
    Edge,
    FlowVector,
    GameConstants,
    GameSkeleton,
    Infeasible,
    InvalidGame,
    PolyLatency,
    RoutingGame,
    TollVector,
    acyclic_reduce,
    derive_constants,
    eval_latency,
    has_positive_cycle,
    is_feasible,
    total_latency,
    validate_game,
)
from .instances import BadSpec, InstanceSpec, generate
from .oracle import (
    EquilibriumOracle,
    OracleBudgetExceeded,
    OracleMode,
    OracleResponse,
    TollOutOfRange,
    serialize_query_log,
)
from .paths import Unreachable, shortest_path
from .zeroorder import (
    CostOracleSample,
    OptConfig,
    OptimizationReport,
    OracleSampleFailed,
    compute_optimal_tolls,
    estimate_gradient,
    minimize_total_latency,
    project_to_polytope,
    zero_order_cost_oracle,
)

__all__ = [
    "Commodity",
    "Edge",
    "FlowVector",
    "GameConstants",
    "GameSkeleton",
    "Infeasible",
    "InvalidGame",
    "PolyLatency",
    "RoutingGame",
    "TollVector",
    "acyclic_reduce",
    "derive_constants",
    "eval_latency",
    "has_positive_cycle",
    "is_feasible",
    "total_latency",
    "validate_game",
    "EqConfig",
    "EquilibriumResult",
    "NoConvergence",
    "beckmann_potential",
    "solve_equilibrium",
    "wardrop_violation",
    "Unreachable",
    "shortest_path",
    "OracleMode",
    "OracleResponse",
    "EquilibriumOracle",
    "TollOutOfRange",
    "OracleBudgetExceeded",
    "serialize_query_log",
    "Ellipsoid",
    "NumericBreakdown",
    "DegenerateCut",
    "TargetInfeasible",
    "TargetCyclic",
    "EnforcementConfig",
    "EnforcementResult",
    "EnforcementStatus",
    "separation_cut",
    "enforce_flow",
    "OptConfig",
    "CostOracleSample",
    "OptimizationReport",
    "OracleSampleFailed",
    "zero_order_cost_oracle",
    "project_to_polytope",
    "estimate_gradient",
    "minimize_total_latency",
    "compute_optimal_tolls",
    "marginal_game",
    "marginal_cost_tolls",
    "optimal_flow",
    "BadSpec",
    "InstanceSpec",
    "generate",
]

__version__ = "0.1.0"
