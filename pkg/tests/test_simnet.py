import random

import numpy as np
import pytest

from genet.identity import new_random_id
from genet.simnet.events import EventQueue, Simulator
from genet.simnet.failures import FailurePlan, inject_failures
from genet.simnet.presets import (
    INTERNET,
    LAN,
    PRESETS,
    REMOTE_RELAY,
    Bucket,
    ScenarioPreset,
    get_preset,
    sample_connection,
)


def test_event_fires_at_its_time():
    sim = Simulator()
    seen = []
    sim.schedule(7.0, lambda: seen.append(sim.now))
    sim.run()
    assert seen == [7.0]


def test_same_time_fires_in_insertion_order():
    sim = Simulator()
    seen = []
    for i in range(5):
        sim.schedule(1.0, seen.append, i)
    sim.run()
    assert seen == [0, 1, 2, 3, 4]


def test_past_scheduling_rejected_and_cancel_skips():
    sim = Simulator()
    seen = []
    sim.schedule(5.0, lambda: None)
    sim.run()
    with pytest.raises(ValueError):
        sim.schedule(4.0, lambda: None)
    ev = sim.after(1.0, seen.append, "x")
    ev.cancel()
    sim.run()
    assert seen == []


def test_run_until_stops_clock_at_bound():
    sim = Simulator()
    seen = []
    sim.schedule(10.0, seen.append, 1)
    assert sim.run(until=5.0) == 5.0 and not seen
    sim.run(until=10.0)
    assert seen == [1]


def test_million_events_match_sort_oracle():
    rng = np.random.default_rng(0)
    times = rng.integers(0, 1000, size=1_000_000).astype(float)
    q = EventQueue()
    for t in times:
        q.push(t, None)
    popped = [(e.at, e.seq) for e in (q.pop() for _ in range(len(times)))]
    oracle = sorted(zip(times.tolist(), range(len(times))))
    assert popped == oracle


def test_clock_monotone_with_events_scheduling_events():
    sim = Simulator()
    rng = random.Random(5)
    seen = []

    def tick(depth):
        seen.append(sim.now)
        if depth < 4:
            for _ in range(3):
                sim.after(rng.choice([0.0, 1.0, 2.5]), tick, depth + 1)

    sim.schedule(0.0, tick, 0)
    sim.run()
    assert seen == sorted(seen) and len(seen) == sum(3**k for k in range(5))


def test_lan_always_succeeds_under_a_second():
    rng = random.Random(1)
    draws = [sample_connection(LAN, rng) for _ in range(100_000)]
    assert all(d.success for d in draws)
    lat = np.array([d.latency_ms for d in draws])
    assert lat.max() <= 1000
    # the configured mass carries the >= 95.5% property; samples track it
    mass = LAN.mass_below(500)
    assert mass == pytest.approx(363 / 380) and mass >= 0.955
    stderr = (mass * (1 - mass) / len(lat)) ** 0.5
    assert abs((lat < 500).mean() - mass) <= 3 * stderr


@pytest.mark.parametrize("preset", [LAN, REMOTE_RELAY, INTERNET], ids=lambda p: p.name)
def test_preset_fidelity_per_bucket(preset):
    rng = random.Random(11)
    lat = np.array([sample_connection(preset, rng).latency_ms for _ in range(100_000)])
    for b in preset.buckets:
        share = ((lat > b.lo) & (lat <= b.hi)).mean()
        assert abs(share - b.prob) <= 0.01, (b, share)


def test_internet_success_fraction():
    rng = random.Random(3)
    ok = sum(sample_connection(INTERNET, rng).success for _ in range(10_000))
    assert abs(ok / 10_000 - 0.487) <= 0.02


def test_remote_relay_fast_mass():
    assert REMOTE_RELAY.mass_below(700) == pytest.approx(0.89)
    assert REMOTE_RELAY.max_latency_ms == 16_000


def test_degenerate_bucket_is_exact():
    preset = ScenarioPreset("fixed", 1.0, (Bucket(100, 100, 1.0),))
    rng = random.Random(0)
    assert {sample_connection(preset, rng).latency_ms for _ in range(50)} == {100.0}


def test_invalid_presets_rejected():
    with pytest.raises(ValueError):
        ScenarioPreset("x", 1.5, (Bucket(0, 1, 1.0),))
    with pytest.raises(ValueError):
        ScenarioPreset("x", 1.0, (Bucket(0, 1, 0.5),))
    with pytest.raises(ValueError):
        get_preset("moon")
    assert set(PRESETS) == {"lan", "remote-relay", "internet"}


def test_failure_extremes(make_ids):
    ids = make_ids(100)
    root = ids[0]
    rng = random.Random(0)
    assert inject_failures(ids, root, FailurePlan(0.0), rng) == set()
    assert inject_failures(ids, root, FailurePlan(1.0), rng) == set(ids[1:])
    with pytest.raises(ValueError):
        FailurePlan(1.1)


def test_failure_fraction_concentrates():
    # binomial oracle: 1000 trials of 9999 non-root nodes at F = 0.25
    rng = random.Random(8)
    ids = [new_random_id(rng) for _ in range(10_000)]
    plan = FailurePlan(0.25)
    fractions = [len(inject_failures(ids, ids[0], plan, rng)) / 9_999 for _ in range(1000)]
    assert abs(np.mean(fractions) - 0.25) <= 0.01
