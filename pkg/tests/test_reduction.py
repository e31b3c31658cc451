import dataclasses
import json

import numpy as np
import pytest

from stconsensus.delayed import run_to_consensus
from stconsensus.generators import random_tree_laplacian
from stconsensus.graph import laplacian_from_weights
from stconsensus.reduction import (
    ReductionError,
    StructuralBounds,
    compute_bounds,
    extract_reduced,
    smallest_cover,
    verify_reduction,
    window_B_domination_check,
)
from stconsensus.sim import DtRule, EventLog, SchedulerParams, disagreement, run_centralized, run_distributed
from stconsensus.sim import run_distributed_iid
from stconsensus.topology import RowFamilies

CYCLE3 = laplacian_from_weights([[0, 0, 1], [1, 0, 0], [0, 1, 0]])


def dist(delta=0.1, **kw):
    return SchedulerParams("distributed", delta, **kw)


def bounds_for(L, delta):
    n = len(L)
    return compute_bounds([delta] * n, np.diag(L).tolist(), n)


# compute_bounds

def test_bounds_four_agents():
    b = compute_bounds([0.1] * 4, [1.0] * 4, 4)
    assert (b.delta_min, b.delta_max, b.h_prime, b.tau, b.h, b.N) == (0.1, 0.9, 9, 30, 40, 40)


def test_bounds_two_agents():
    b = compute_bounds([0.25] * 2, [1.0] * 2, 2)
    assert (b.delta_min, b.delta_max, b.h_prime, b.tau, b.h) == (0.25, 0.75, 3, 4, 8)


def test_bounds_single_agent():
    b = compute_bounds([0.2], [2.0], 1)
    assert b.tau == 0 and b.h == b.h_prime + 1


def test_bounds_interval_pairs_and_leaders():
    b = compute_bounds([0.1, 0.2, 0.1], [(0.5, 2.0), 0.0, (1.0, 1.0)], 3)
    assert b.delta_min == pytest.approx(0.05)
    assert b.delta_max == pytest.approx(1.8)
    assert b.h_prime == 36
    with pytest.raises(ValueError, match="no schedulable agent"):
        compute_bounds([0.1, 0.1], [0.0, 0.0])


def test_smallest_cover():
    assert smallest_cover(0.1, 0.9) == 9
    assert smallest_cover(0.3, 0.7) == 3
    assert smallest_cover(1.0, 0.5) == 1
    for dmin, dmax in [(0.07, 0.93), (0.013, 0.987), (0.2, 0.8)]:
        m = smallest_cover(dmin, dmax)
        assert m * dmin >= dmax * (1 - 1e-12)
        assert (m - 1) * dmin < dmax * (1 - 1e-12)


# extract_reduced

def test_leader_follower_row():
    L = np.array([[0.0, 0.0], [-1.0, 1.0]])
    traj, log = run_distributed(L, dist((0.1, 0.1)), [1.0, 0.0], 5.0, seed=3)
    red = extract_reduced(log, traj)
    dt0 = log[0].dts[1]
    assert red.updaters[0] == (1,)
    assert red.delays[0].tolist() == [-1, 0]
    assert np.allclose(red.coeffs[0, 0, 1], [dt0, 1 - dt0], rtol=0, atol=1e-15)
    assert np.array_equal(red.coeffs[0, 0, 0], [1.0, 0.0])


def test_alternating_updates_have_delay_one():
    L = np.array([[1.0, -1.0], [-1 / 1.1, 1 / 1.1]])
    p = dist(0.25, dt_rule=DtRule("fixed", 0.5))
    traj, log = run_distributed(L, p, [0.0, 1.0], 4.75, 0)
    assert [e.agents for e in log.events[1:]] == [(0,), (1,)] * 8 + [(0,)]
    red = extract_reduced(log, traj)
    assert red.delays[0].tolist() == [0, -1]
    for k in range(1, red.steps):
        (i,) = red.updaters[k]
        assert red.delays[k, i] == 1


def test_consensus_initial_keeps_y_constant():
    traj, log = run_distributed(CYCLE3, dist(), [2.0] * 3, 10.0, 0)
    red = extract_reduced(log, traj)
    assert np.all(red.y == 2.0)


def test_rejects_centralized_log():
    traj, log = run_centralized(CYCLE3, SchedulerParams("centralized", 0.1), [0, 1, 2], 2.0, 0)
    with pytest.raises(ValueError):
        extract_reduced(log, traj)


def test_misaligned_trajectory_rejected():
    traj, log = run_distributed(CYCLE3, dist(), [0, 1, 2], 5.0, 0)
    other, _ = run_distributed(CYCLE3, dist(), [0, 1, 2], 5.0, 1)
    with pytest.raises(ValueError):
        extract_reduced(log, other)


# verify_reduction

@pytest.mark.parametrize("reads", ["latest", "own-update"])
def test_valid_runs_have_no_violations(reads):
    rng = np.random.default_rng(0)
    for seed in range(15):
        n = int(rng.integers(2, 6))
        L = random_tree_laplacian(n, rng, leader=seed % 2 == 0)
        traj, log = run_distributed(L, dist(0.1, reads=reads), rng.uniform(0, 10, n), 20.0, seed)
        red = extract_reduced(log, traj)
        rep = verify_reduction(red, bounds=bounds_for(L, 0.1), deltas=[0.1] * n)
        assert rep.ok, rep.violations
        assert rep.max_replay_error <= 1e-9


def _corrupt(log: EventLog, k: int, extra: float) -> EventLog:
    events = list(log.events)
    e = events[k]
    events[k] = dataclasses.replace(e, dts=(e.dts[0] + extra,) + e.dts[1:])
    return dataclasses.replace(log, events=events)


def test_corrupted_dt_is_flagged():
    traj, log = run_distributed(CYCLE3, dist(), [1.0, 4.0, 9.0], 10.0, 2)
    bad = _corrupt(log, 0, 0.1)
    with pytest.raises(ReductionError) as info:
        extract_reduced(bad, traj)
    assert info.value.agent == 0
    red = extract_reduced(bad, traj, strict=False)
    assert red.one_step_errors
    rep = verify_reduction(red, sim_states=red.y)
    assert not rep.ok
    assert any("sums to" in v or "replayed" in v for v in rep.violations)


def test_own_update_corruption_caught_by_replay():
    traj, log = run_distributed(CYCLE3, dist(reads="own-update"), [1.0, 4.0, 9.0], 10.0, 2)
    red = extract_reduced(_corrupt(log, 0, 0.1), traj, strict=False)
    rep = verify_reduction(red)
    assert any("replayed" in v for v in rep.violations)


def test_all_leaders_trivially_consistent():
    traj, log = run_distributed(np.zeros((3, 3)), dist(), [0, 1, 2], 10.0, 0)
    red = extract_reduced(log, traj)
    assert red.steps == 0
    rep = verify_reduction(red)
    assert rep.ok and rep.max_delay == 0


def test_bound_violations_are_reported():
    traj, log = run_distributed(CYCLE3, dist(), [0, 1, 2], 30.0, 0)
    red = extract_reduced(log, traj)
    tight = StructuralBounds(0.1, 0.9, 0, 0, 1, 1)
    text = " ".join(verify_reduction(red, bounds=tight).violations)
    assert "exceeds tau" in text and "exceeds h = 1" in text and "exceed h' + 1" in text
    rep = verify_reduction(red, deltas=[0.45] * 3, max_violations=5)
    assert len(rep.violations) == 5 and all("a_ii^0" in v for v in rep.violations)


def test_window_max_nonincreasing_and_delayed_replay_converges():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        L = random_tree_laplacian(4, rng)
        traj, log = run_distributed(L, dist(0.2), rng.uniform(0, 10, 4), 60.0, seed)
        red = extract_reduced(log, traj)
        tau = red.coeffs.shape[1] - 1
        hi = [red.y[max(0, k - tau): k + 1].max() for k in range(len(red.y))]
        lo = [red.y[max(0, k - tau): k + 1].min() for k in range(len(red.y))]
        assert np.all(np.diff(hi) <= 1e-12) and np.all(np.diff(lo) >= -1e-12)
        if disagreement(traj.final_state) < 1e-6:
            sys = red.delayed_system()
            ok, steps, _ = run_to_consensus(sys, 1e-6, max_steps=red.steps)
            assert ok
            assert np.allclose(sys.state, traj.final_state.mean(), rtol=0, atol=1e-6)


def test_reduced_json_export():
    traj, log = run_distributed(CYCLE3, dist(), [0, 1, 2], 5.0, 0)
    red = extract_reduced(log, traj)
    b = bounds_for(CYCLE3, 0.1)
    d = json.loads(red.to_json(b))
    assert d["bounds"]["tau"] == b.tau and len(d["steps"]) == red.steps
    k = 3
    dense = np.zeros_like(red.coeffs[k])
    for l, i, j, v in d["steps"][k]["coeffs"]:
        dense[l, i, j] = v
    assert np.array_equal(dense, red.coeffs[k])
    assert np.array_equal(np.array(d["steps"][k]["B"]), red.B[k])


# window_B_domination_check

def test_window_check_cycle():
    for seed in range(5):
        traj, log = run_distributed(CYCLE3, dist(0.1), [0, 5, 10], 60.0, seed)
        red = extract_reduced(log, traj)
        res = window_B_domination_check(red, CYCLE3, bounds_for(CYCLE3, 0.1))
        assert res and res.windows > 0


def test_window_check_without_tree():
    W = np.zeros((4, 4))
    W[0, 1] = W[1, 0] = W[2, 3] = W[3, 2] = 1
    L = laplacian_from_weights(W)
    traj, log = run_distributed(L, dist(), [0, 1, 2, 3], 60.0, 0)
    res = window_B_domination_check(extract_reduced(log, traj), L, bounds_for(L, 0.1))
    assert res.domination and not res.spanning_tree and not res


def test_window_check_single_agent():
    traj, log = run_distributed([[0.0]], dist(), [1.0], 5.0, 0)
    assert window_B_domination_check(extract_reduced(log, traj), [[0.0]], compute_bounds([0.1], [1.0]))


def test_four_agent_iid_reduction_clean():
    fam = RowFamilies([
        [[1, -1, 0, 0], [1, 0, 0, -1]],
        [[-1, 1, 0, 0], [0, 1, -1, 0]],
        [[0, -1, 1, 0], [0, 0, 1, -1]],
        [[0, -1, 0, 1], [0, 0, -1, 1]],
    ])
    traj, log = run_distributed_iid(fam, dist(0.1), [0, 3, 6, 9], 50.0, 4)
    b = compute_bounds([0.1] * 4, fam.diag_bounds(), 4)
    rep = verify_reduction(extract_reduced(log, traj), bounds=b, deltas=[0.1] * 4)
    assert rep.ok, rep.violations
    assert rep.max_delay <= b.tau and rep.max_update_gap <= b.h
