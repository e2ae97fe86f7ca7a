"""Randomized fault schedules against a single StreamLender."""
import random

from genet.streammap import LOCAL, StreamLender, square


def run_schedule(seed, n_values=200, n_children=8, max_fail_share=0.5, max_steps=200_000):
    """Drive one lender through a random schedule of loans, results and child crashes.

    Returns the emitted ``(tag, result)`` list and the number of children failed.
    Results computed by a child that later crashes stay in transit and may still
    arrive; the lender must drop them.
    """
    rng = random.Random(seed)
    lender = StreamLender()
    lender.add_child(LOCAL, limit=1)
    children = [f"c{i}" for i in range(n_children)]
    for c in children:
        lender.add_child(c, leaf_count=rng.randint(0, 5))
        if rng.random() < 0.5:
            lender.retire(LOCAL)
    budget = int(max_fail_share * n_children) if rng.random() < 0.9 else rng.randint(0, n_children // 2)
    live = set(children) | ({LOCAL} if LOCAL in lender.limiters else set())
    in_transit = []  # (child, seq, result)
    emitted = []
    fails = 0
    pushed = 0

    for _ in range(max_steps):
        if pushed < n_values and rng.random() < 0.3:
            for _ in range(rng.randint(1, 10)):
                if pushed < n_values:
                    lender.push(pushed)
                    pushed += 1
        for child, seq, value in lender.dispatch():
            in_transit.append((child, seq, square(value)))
        lender.check_invariants()
        for child, limiter in lender.limiters.items():
            # values already in flight are never recalled, so only new loans are bounded
            assert limiter.in_flight <= max(limiter.limit, lender.in_flight(child))
        if len(emitted) == n_values:
            break

        roll = rng.random()
        if roll < 0.04 and fails < budget:
            victim = rng.choice(sorted(live - {LOCAL}) or [None])
            if victim is not None and len(live) > 1:
                live.discard(victim)
                lender.on_child_failure(victim)
                fails += 1
        elif roll < 0.10:
            target = rng.choice(sorted(live))
            if target != LOCAL:
                lender.set_leaf_count(target, rng.randint(0, 6))
        elif in_transit:
            child, seq, result = in_transit.pop(rng.randrange(len(in_transit)))
            emitted.extend(lender.on_result(child, seq, result))
            if rng.random() < 0.05:
                # a duplicate of an already-accepted result must be ignored
                emitted.extend(lender.on_result(child, seq, result))
    return emitted, fails
