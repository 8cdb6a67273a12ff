"""The query boundary: tolls in, induced equilibrium flow out.

An oracle wraps a routing game whose latency functions callers must not
see.  Each query submits a toll vector and receives the aggregate
equilibrium flow (and, in FLOW_AND_COST mode, its total latency), with a
strictly increasing query counter.  The hidden game is reachable only
through a construction-time test gate used by the property-test suite.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .equilibrium import EqConfig, solve_equilibrium
from .game import (
    GameSkeleton,
    RoutingGame,
    TollVector,
    total_latency,
    validate_game,
)

__all__ = [
    "OracleMode",
    "OracleResponse",
    "EquilibriumOracle",
    "TollOutOfRange",
    "OracleBudgetExceeded",
    "reveal_hidden_game",
    "serialize_query_log",
]

#: Flow accuracies below this are not honestly deliverable in double
#: precision; callers demanding less get this floor instead.
ACCURACY_FLOOR = 1e-11


class TollOutOfRange(ValueError):
    """Queried tolls are negative or exceed the toll cap T_max."""


class OracleBudgetExceeded(RuntimeError):
    """The optional query budget is exhausted."""


class OracleMode(enum.Enum):
    FLOW_ONLY = "flow_only"
    FLOW_AND_COST = "flow_and_cost"


@dataclass(frozen=True)
class OracleResponse:
    aggregate_flow: np.ndarray
    total_cost: float | None
    query_index: int


class EquilibriumOracle:
    """Equilibrium oracle over a hidden routing game.

    ``eps_query`` is the accuracy promise on the returned aggregate flow
    (infinity norm against the exact deterministic equilibrium).  Queries
    mutate only the counter and log; responses are a pure function of the
    toll vector.
    """

    def __init__(
        self,
        game: RoutingGame,
        mode: OracleMode = OracleMode.FLOW_AND_COST,
        eps_query: float = 1e-9,
        max_queries: int | None = None,
        allow_test_backdoor: bool = False,
    ):
        validate_game(game)
        if eps_query < ACCURACY_FLOOR:
            raise ValueError(
                f"eps_query below the double-precision floor {ACCURACY_FLOOR}"
            )
        self.__game = game
        self.mode = mode
        self.eps_query = float(eps_query)
        self.max_queries = max_queries
        self.skeleton: GameSkeleton = game.skeleton()
        self._allow_test_backdoor = bool(allow_test_backdoor)
        self._count = 0
        self._log: list[tuple[np.ndarray, OracleResponse]] = []
        # The duality-gap certificate scales with the potential's magnitude;
        # targets below the representable floor would only trip spurious
        # NoConvergence.  Flow accuracy itself comes from the Newton
        # refinement, which the test suite checks against closed forms.
        const = self.skeleton.constants
        gap_floor = 1e-12 * (
            1.0 + const.K * max(1.0, const.total_demand) * self.skeleton.m**0.5
        )
        self._eq_cfg = EqConfig(
            accuracy=max(min(1e-8, self.eps_query / 4.0), gap_floor)
        )

    @property
    def query_count(self) -> int:
        return self._count

    @property
    def query_log(self) -> list[tuple[np.ndarray, OracleResponse]]:
        return list(self._log)

    def query(self, tolls: TollVector) -> OracleResponse:
        tau = np.asarray(tolls.values, dtype=float)
        m = self.skeleton.m
        if tau.shape != (m,):
            raise TollOutOfRange(f"expected {m} tolls, got shape {tau.shape}")
        t_max = self.skeleton.constants.T_max
        if np.any(tau < -1e-12) or np.any(tau > t_max * (1 + 1e-12)):
            raise TollOutOfRange(f"tolls must lie in [0, {t_max}]")
        if self.max_queries is not None and self._count >= self.max_queries:
            raise OracleBudgetExceeded(f"budget of {self.max_queries} queries spent")
        tau = np.clip(tau, 0.0, t_max)
        result = solve_equilibrium(self.__game, TollVector(tau), self._eq_cfg)
        cost = None
        if self.mode is OracleMode.FLOW_AND_COST:
            cost = total_latency(self.__game, result.flow)
        self._count += 1
        resp = OracleResponse(
            aggregate_flow=result.flow.aggregate.copy(),
            total_cost=cost,
            query_index=self._count,
        )
        self._log.append((tau.copy(), resp))
        return resp

    def reset_counter(self) -> None:
        self._count = 0
        self._log.clear()

    def __repr__(self) -> str:  # never leak the game
        return (
            f"EquilibriumOracle(m={self.skeleton.m}, k={self.skeleton.k}, "
            f"mode={self.mode.value}, eps_query={self.eps_query}, "
            f"queries={self._count})"
        )


def reveal_hidden_game(oracle: EquilibriumOracle) -> RoutingGame:
    """Test-suite backdoor.  Only oracles constructed with
    ``allow_test_backdoor=True`` can be opened; production code never sets
    the flag, so the hidden game stays hidden."""
    if not getattr(oracle, "_allow_test_backdoor", False):
        raise PermissionError("this oracle was not built with the test backdoor")
    return oracle._EquilibriumOracle__game


def serialize_query_log(oracle: EquilibriumOracle) -> str:
    """Query log as JSON lines: index, tolls, flow, cost (null if hidden)."""
    ids = oracle.skeleton.edge_ids
    lines = []
    for tau, resp in oracle.query_log:
        lines.append(
            json.dumps(
                {
                    "index": resp.query_index,
                    "tolls": {eid: tau[j] for j, eid in enumerate(ids)},
                    "flow": {
                        eid: resp.aggregate_flow[j] for j, eid in enumerate(ids)
                    },
                    "cost": resp.total_cost,
                }
            )
        )
    return "\n".join(lines)
