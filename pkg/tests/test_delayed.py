import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stconsensus.delayed import (
    CoefficientError,
    DelayedSystem,
    build_B,
    dump_schedule,
    load_schedule,
    run_to_consensus,
    schedule_provider,
    step_delayed,
    validate_coefficients,
    window_tree_check,
)
from stconsensus.generators import BlockwiseIIDSchedule, periodic_schedule, window_sum_B
from stconsensus.stochastic import build_augmented

HALF = np.full((2, 2), 0.5)


def const(*blocks):
    arr = [np.asarray(b, dtype=float) for b in blocks]
    return lambda k: arr


def test_step_averaging():
    sys = DelayedSystem(const(HALF), 0, [0.0, 1.0])
    assert np.array_equal(step_delayed(sys), [0.5, 0.5])


def test_step_keeps_consensus():
    rng = np.random.default_rng(0)
    blocks = rng.random((3, 4, 4))
    blocks /= blocks.sum(axis=(0, 2))[None, :, None]
    for l in range(1, 3):
        np.fill_diagonal(blocks[l], 0)
    blocks /= blocks.sum(axis=(0, 2))[None, :, None]
    sys = DelayedSystem(const(*blocks), 2, np.full(4, 3.25))
    for _ in range(5):
        assert np.allclose(sys.step(), 3.25, rtol=0, atol=1e-14)


def test_step_scalar_self_delay():
    sys = DelayedSystem(const([[0.6]], [[0.4]]), 1, [1.0], history=[[1.0], [0.0]], allow_self_delay=True)
    assert sys.step() == pytest.approx([0.6], abs=1e-15)


def test_self_delay_rejected_by_default():
    sys = DelayedSystem(const([[0.6]], [[0.4]]), 1, [1.0])
    with pytest.raises(CoefficientError):
        sys.step()


def test_row_sum_violation_names_row():
    bad = [[0.5, 0.5], [0.5, 0.6]]
    with pytest.raises(CoefficientError, match="row 1"):
        DelayedSystem(const(bad), 0, [0.0, 1.0]).step()


def test_negative_and_zero_diagonal_rejected():
    with pytest.raises(CoefficientError):
        validate_coefficients([[[1.5, -0.5], [0, 1]]], 0)
    with pytest.raises(CoefficientError):
        validate_coefficients([[[0, 1], [0, 1]]], 0)


def test_too_many_blocks_rejected():
    sys = DelayedSystem(const(np.eye(2), np.zeros((2, 2))), 0, [0.0, 1.0])
    with pytest.raises(CoefficientError):
        sys.step()


def test_run_consensus_initial():
    assert run_to_consensus(DelayedSystem(const(HALF), 0, [2.0, 2.0]), 1e-6) == (True, 0, 0.0)


def test_run_single_averaging_step():
    assert run_to_consensus(DelayedSystem(const(HALF), 0, [0.0, 1.0]), 1e-6) == (True, 1, 0.0)


def test_run_identity_never_mixes():
    res = run_to_consensus(DelayedSystem(const(np.eye(3)), 0, [0.0, 1.0, 2.0]), 1e-6, max_steps=50)
    assert res == (False, 50, 2.0)


def test_run_rejects_nonpositive_tol():
    with pytest.raises(ValueError):
        run_to_consensus(DelayedSystem(const(HALF), 0, [0.0, 1.0]), 0)


def test_build_B_examples():
    assert np.array_equal(build_B([HALF]), HALF)
    B = build_B([[[0.5, 0.2], [0, 1]], [[0, 0.3], [0, 0]]])
    assert np.allclose(B, [[0.5, 0.5], [0, 1]], atol=1e-15)
    assert np.array_equal(build_B([np.eye(3), np.zeros((3, 3))]), np.eye(3))


def test_window_tree_examples():
    B = np.array([[0.8, 0.2], [0.0, 1.0]])
    assert window_tree_check(const(B), 0, 3, 0.2)
    B1 = np.array([[0.7, 0.3], [0.0, 1.0]])
    B2 = np.array([[1.0, 0.0], [0.3, 0.7]])
    alt = schedule_provider([[B1], [B2]])
    assert window_tree_check(alt, 0, 2, 0.3)
    assert not window_tree_check(const(np.eye(3)), 0, 5, 1e-9)
    with pytest.raises(ValueError):
        window_tree_check(const(B), 0, 0, 0.1)


def _random_delayed_blocks(rng, n, tau):
    blocks = rng.random((tau + 1, n, n)) * (rng.random((tau + 1, n, n)) < 0.6)
    for l in range(1, tau + 1):
        np.fill_diagonal(blocks[l], 0)
    for i in range(n):
        blocks[0, i, i] = rng.uniform(0.1, 1.0)
    return blocks / blocks.sum(axis=(0, 2))[None, :, None]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(0, 3))
def test_convex_window_and_augmented_equivalence(seed, n, tau):
    rng = np.random.default_rng(seed)
    steps = [_random_delayed_blocks(rng, n, tau) for _ in range(12)]
    hist = list(rng.uniform(-5, 5, (tau + 1, n)))
    sys = DelayedSystem(schedule_provider(steps, periodic=False), tau, hist[0], history=hist)
    y = np.concatenate(hist)
    hi, lo = max(h.max() for h in hist), min(h.min() for h in hist)
    for k in range(12):
        x = sys.step()
        assert np.all(x <= hi + 1e-12) and np.all(x >= lo - 1e-12)
        w = sys.window()
        assert w.max() <= hi + 1e-12 and w.min() >= lo - 1e-12
        hi, lo = w.max(), w.min()
        y = build_augmented(list(steps[k])) @ y
        assert np.allclose(sys.window().ravel(), y, rtol=0, atol=1e-12)


def test_schedule_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    sched = periodic_schedule(3, 2, 4, rng)
    dump_schedule(sched, tmp_path / "s.json")
    back = load_schedule(tmp_path / "s.json")
    assert all(np.array_equal(a, b) for a, b in zip(sched, back))
    with pytest.raises(IndexError):
        schedule_provider(sched, periodic=False)(10)


def test_periodic_schedule_meets_hypotheses():
    rng = np.random.default_rng(8)
    for _ in range(20):
        n, tau, period = rng.integers(2, 7), rng.integers(0, 4), rng.integers(1, 5)
        sched = periodic_schedule(n, tau, period, rng, delta=0.05)
        prov = schedule_provider(sched)
        for k in range(period):
            assert window_tree_check(prov, k, period, 0.05)
        for A in sched:
            validate_coefficients(A, 0)
            assert np.all(np.diag(A[0]) >= 0.05)


def test_blockwise_schedule_is_deterministic_per_block():
    s1, s2 = BlockwiseIIDSchedule(4, 2, 3, seed=9), BlockwiseIIDSchedule(4, 2, 3, seed=9)
    for k in [0, 5, 100, 7, 0]:
        assert np.array_equal(s1(k), s2(k))
    mean = sum(window_sum_B(s1.block(b)) for b in range(400)) / 400
    assert np.all(np.diag(mean) >= 0.05)
