"""Query boundary: response correctness, counting, logging, privacy."""

import json

import numpy as np
import pytest

from conftest import random_parallel
from tollopt import FlowVector, TollVector, solve_equilibrium, total_latency
from tollopt.oracle import (
    EquilibriumOracle,
    OracleBudgetExceeded,
    OracleMode,
    TollOutOfRange,
    reveal_hidden_game,
    serialize_query_log,
)


def test_fig1_l1_flow_only_zero_tolls(fig1_l1):
    oracle = EquilibriumOracle(fig1_l1, OracleMode.FLOW_ONLY)
    resp = oracle.query(TollVector.zeros(2))
    assert np.allclose(resp.aggregate_flow, [0.0, 1.0], atol=1e-9)
    assert resp.total_cost is None


def test_fig1_pair_indistinguishable_on_grid(fig1_l1, fig1_l2):
    o1 = EquilibriumOracle(fig1_l1, OracleMode.FLOW_ONLY, eps_query=1e-10)
    o2 = EquilibriumOracle(fig1_l2, OracleMode.FLOW_ONLY, eps_query=1e-10)
    worst = 0.0
    for t0 in np.linspace(0, 2, 9):
        for t1 in np.linspace(0, 2, 9):
            tolls = TollVector(np.array([t0, t1]))
            f1 = o1.query(tolls).aggregate_flow
            f2 = o2.query(tolls).aggregate_flow
            worst = max(worst, float(np.max(np.abs(f1 - f2))))
    assert worst <= 2 * 1e-10


def test_fig1_pair_costs_differ(fig1_l1, fig1_l2):
    o1 = EquilibriumOracle(fig1_l1, OracleMode.FLOW_AND_COST)
    o2 = EquilibriumOracle(fig1_l2, OracleMode.FLOW_AND_COST)
    r1 = o1.query(TollVector.zeros(2))
    r2 = o2.query(TollVector.zeros(2))
    assert r1.total_cost == pytest.approx(0.0, abs=1e-9)
    assert r2.total_cost == pytest.approx(1.0, abs=1e-9)


def test_query_indices_increment(pigou):
    oracle = EquilibriumOracle(pigou, OracleMode.FLOW_ONLY)
    assert oracle.query(TollVector.zeros(2)).query_index == 1
    assert oracle.query(TollVector.zeros(2)).query_index == 2
    assert oracle.query_count == 2


def test_reset_counter(pigou):
    oracle = EquilibriumOracle(pigou, OracleMode.FLOW_ONLY)
    for _ in range(5):
        oracle.query(TollVector.zeros(2))
    oracle.reset_counter()
    assert oracle.query_count == 0
    assert oracle.query_log == []
    oracle.reset_counter()  # idempotent
    assert oracle.query_count == 0
    assert oracle.query(TollVector.zeros(2)).query_index == 1


def test_determinism(pigou, rng):
    oracle = EquilibriumOracle(pigou, OracleMode.FLOW_AND_COST)
    tau = TollVector(rng.uniform(0, 2, 2))
    a = oracle.query(tau)
    b = oracle.query(tau)
    assert np.array_equal(a.aggregate_flow, b.aggregate_flow)
    assert a.total_cost == b.total_cost


def test_toll_out_of_range(pigou):
    oracle = EquilibriumOracle(pigou, OracleMode.FLOW_ONLY)
    with pytest.raises(TollOutOfRange):
        oracle.query(TollVector(np.array([0.0, 100.0])))  # above T_max = 8
    with pytest.raises(TollOutOfRange):
        oracle.query(TollVector(np.array([1.0, 1.0, 1.0])))  # wrong length


def test_budget_exhaustion(pigou):
    oracle = EquilibriumOracle(pigou, OracleMode.FLOW_ONLY, max_queries=2)
    oracle.query(TollVector.zeros(2))
    oracle.query(TollVector.zeros(2))
    with pytest.raises(OracleBudgetExceeded):
        oracle.query(TollVector.zeros(2))


def test_cost_consistency_with_returned_flow(rng):
    game = random_parallel(3, rng)
    oracle = EquilibriumOracle(
        game, OracleMode.FLOW_AND_COST, eps_query=1e-9, allow_test_backdoor=True
    )
    c = game.constants
    for _ in range(10):
        tau = TollVector(rng.uniform(0, 2, 3))
        resp = oracle.query(tau)
        direct = total_latency(
            reveal_hidden_game(oracle), FlowVector.single(resp.aggregate_flow)
        )
        assert abs(resp.total_cost - direct) <= 2 * game.m * c.K**2 * oracle.eps_query


def test_flow_accuracy_against_hidden_equilibrium(rng):
    game = random_parallel(4, rng, quadratic=True)
    oracle = EquilibriumOracle(
        game, OracleMode.FLOW_ONLY, eps_query=1e-9, allow_test_backdoor=True
    )
    hidden = reveal_hidden_game(oracle)
    for _ in range(10):
        tau = TollVector(rng.uniform(0, 2, 4))
        resp = oracle.query(tau)
        exact = solve_equilibrium(hidden, tau).flow.aggregate
        assert np.max(np.abs(resp.aggregate_flow - exact)) <= oracle.eps_query


def test_backdoor_gated(pigou):
    locked = EquilibriumOracle(pigou, OracleMode.FLOW_ONLY)
    with pytest.raises(PermissionError):
        reveal_hidden_game(locked)
    unlocked = EquilibriumOracle(pigou, OracleMode.FLOW_ONLY, allow_test_backdoor=True)
    assert reveal_hidden_game(unlocked) is pigou


def test_no_game_leak_in_repr_or_skeleton(pigou):
    oracle = EquilibriumOracle(pigou, OracleMode.FLOW_ONLY)
    assert "PolyLatency" not in repr(oracle)
    assert not hasattr(oracle.skeleton, "edges")  # ids and endpoints only


def test_query_log_serialization(pigou):
    oracle = EquilibriumOracle(pigou, OracleMode.FLOW_AND_COST)
    oracle.query(TollVector(np.array([0.5, 0.0])))
    oracle.query(TollVector(np.array([0.0, 0.5])))
    lines = serialize_query_log(oracle).splitlines()
    assert len(lines) == 2
    rec = json.loads(lines[0])
    assert rec["index"] == 1
    assert set(rec["tolls"]) == {"e0", "e1"}
    assert rec["cost"] is not None


def test_eps_query_floor(pigou):
    with pytest.raises(ValueError):
        EquilibriumOracle(pigou, OracleMode.FLOW_ONLY, eps_query=1e-13)
