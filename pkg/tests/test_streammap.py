import pytest

from genet.overlay import StatusReport
from genet.identity import NodeId
from genet.streammap import (
    LOCAL,
    LendError,
    Limiter,
    StreamLender,
    Task,
    ThroughputMeter,
    limiter_update,
)
from lender_harness import run_schedule


@pytest.mark.parametrize("leaves, limit", [(1, 2), (0, 1), (10, 20)])
def test_limiter_scales_with_leaves(leaves, limit):
    lim = Limiter()
    assert limiter_update(lim, StatusReport(NodeId(1), leaves, 0, 0.0)) == limit


def test_limiter_acquire_release():
    lim = Limiter(limit=1)
    lim.acquire()
    assert not lim.admits()
    with pytest.raises(LendError):
        lim.acquire()
    lim.release()
    with pytest.raises(LendError):
        lim.release()


def test_fixed_limiter_ignores_reports():
    lim = Limiter(limit=1, fixed=True)
    assert lim.update(50) == 1


def test_in_order_emission_through_reorder_buffer():
    lender = StreamLender()
    lender.add_child("a", leaf_count=5)
    lender.extend([1, 2, 3])
    loans = lender.dispatch()
    assert [s for _, s, _ in loans] == [0, 1, 2]
    assert lender.on_result("a", 2, 9) == []
    assert lender.on_result("a", 1, 4) == []
    assert lender.on_result("a", 0, 1) == [(0, 1), (1, 4), (2, 9)]
    assert lender.pending() == 0


def test_tags_travel_with_values():
    lender = StreamLender()
    lender.add_child(LOCAL, limit=1)
    lender.push(3, tag="upstream-7")
    (_, seq, _), = lender.dispatch()
    assert lender.on_result(LOCAL, seq, 9) == [("upstream-7", 9)]


def test_failure_requeues_at_head_and_drops_stale_results():
    lender = StreamLender()
    lender.add_child("a", limit=2)
    lender.add_child("b", limit=2)
    lender.extend(range(6))
    loans = lender.dispatch()
    lent_to_a = sorted(s for c, s, _ in loans if c == "a")
    assert lender.on_child_failure("a") == lent_to_a
    assert list(lender.queue)[: len(lent_to_a)] == lent_to_a
    assert lender.on_result("a", lent_to_a[0], 0) == []
    lender.check_invariants()


def test_child_without_loans_fails_cleanly():
    lender = StreamLender()
    lender.add_child("a")
    assert lender.on_child_failure("a") == []
    assert lender.children == []


def test_retired_local_finishes_its_task_then_stops():
    lender = StreamLender()
    lender.add_child(LOCAL, limit=1)
    lender.extend([5, 6])
    (_, seq, _), = lender.dispatch()
    lender.add_child("child")
    lender.retire(LOCAL)
    loans = lender.dispatch()
    assert all(c == "child" for c, _, _ in loans)
    assert lender.on_result(LOCAL, seq, 25) == [(0, 25)]
    assert LOCAL not in lender.limiters
    with pytest.raises(LendError):
        lender.lend(LOCAL)


def test_lend_errors():
    lender = StreamLender()
    with pytest.raises(LendError):
        lender.lend("x")
    lender.push(1)
    with pytest.raises(LendError):
        lender.lend("x")


def test_round_robin_spreads_loans():
    lender = StreamLender()
    for c in "abc":
        lender.add_child(c, leaf_count=2)
    lender.extend(range(12))
    loans = lender.dispatch()
    assert {c: sum(1 for x, _, _ in loans if x == c) for c in "abc"} == {"a": 4, "b": 4, "c": 4}


def test_value_survives_repeated_failures_of_its_holders():
    lender = StreamLender()
    lender.push(7)
    for i in range(5):
        lender.add_child(f"c{i}", limit=1)
        (child, seq, _), = lender.dispatch()
        lender.on_child_failure(child)
    lender.add_child("survivor", limit=1)
    (child, seq, _), = lender.dispatch()
    assert lender.on_result(child, seq, 49) == [(0, 49)]


@pytest.mark.parametrize("seed", range(20))
def test_random_fault_schedules(seed):
    emitted, _ = run_schedule(seed, n_values=120)
    assert emitted == [(i, i * i) for i in range(120)]


def test_meter_window():
    meter = ThroughputMeter()
    for t in range(0, 10_000, 100):
        meter.record(float(t))
    assert meter.throughput(0, 5_000) == pytest.approx(10.0)
    assert ThroughputMeter().throughput(0, 3_000) == 0
    with pytest.raises(ValueError):
        meter.throughput(0, 2_999)


def test_reference_task_squares():
    assert Task().fn(12) == 144 and Task().duration_ms == 1000
