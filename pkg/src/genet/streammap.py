"""Streaming map over the overlay.

:class:`StreamLender` lends input values to children, remembers them until a
result comes back, re-lends them when a child fails and emits results in
input order. :class:`Limiter` bounds the values in flight on one child
channel, scaled by the number of leaves reported for that subtree.
"""
from __future__ import annotations

from bisect import bisect_right
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Hashable, Iterable, Optional

DEFAULT_VALUES_PER_LEAF = 2
MIN_THROUGHPUT_WINDOW_MS = 3_000.0

# key of a node's own processor in its lender (a leaf computes locally)
LOCAL = "local"


class LendError(RuntimeError):
    pass


def square(value):
    return value * value


@dataclass(frozen=True)
class Task:
    """Reference workload: wait ``duration_ms`` then apply ``fn``."""

    duration_ms: float = 1000.0
    fn: Callable[[Any], Any] = square


@dataclass
class Limiter:
    limit: int = DEFAULT_VALUES_PER_LEAF
    in_flight: int = 0
    last_leaf_count: int = 1
    values_per_leaf: int = DEFAULT_VALUES_PER_LEAF
    fixed: bool = False

    def admits(self) -> bool:
        return self.in_flight < self.limit

    def credit(self) -> int:
        return max(0, self.limit - self.in_flight)

    def acquire(self):
        if not self.admits():
            raise LendError(f"limit {self.limit} reached")
        self.in_flight += 1

    def release(self):
        if self.in_flight == 0:
            raise LendError("release without matching acquire")
        self.in_flight -= 1

    def update(self, leaf_count: int) -> int:
        """Rescale from a subtree report. Values already in flight are never recalled."""
        self.last_leaf_count = leaf_count
        if not self.fixed:
            self.limit = max(1, self.values_per_leaf * leaf_count)
        return self.limit


def limiter_update(state: Limiter, report) -> int:
    """Apply a :class:`~genet.overlay.StatusReport` to a limiter."""
    return state.update(report.leaf_count)


@dataclass
class _Entry:
    tag: Any
    value: Any
    lent_to: Optional[Hashable] = None


class StreamLender:
    """Ledger of one node: input queue, outstanding loans, reorder buffer.

    Every accepted input has a local sequence number and sits in exactly one
    of: the input queue, ``outstanding``, ``reorder_buffer``, or the emitted
    prefix (``seq < next_output_seq``).
    """

    def __init__(self, values_per_leaf: int = DEFAULT_VALUES_PER_LEAF):
        self.values_per_leaf = values_per_leaf
        self.queue: deque[int] = deque()
        self.entries: dict[int, _Entry] = {}
        self.outstanding: dict[int, Hashable] = {}
        self.reorder_buffer: dict[int, Any] = {}
        self.next_seq = 0
        self.next_output_seq = 0
        self.limiters: dict[Hashable, Limiter] = {}
        self.retiring: set[Hashable] = set()
        self._rr = 0

    # -- children ------------------------------------------------------------

    @property
    def children(self) -> list[Hashable]:
        return list(self.limiters)

    def add_child(self, child: Hashable, leaf_count: int = 1, limit: Optional[int] = None):
        if child in self.limiters:
            self.retiring.discard(child)
            return
        if limit is not None:
            limiter = Limiter(limit=limit, values_per_leaf=self.values_per_leaf, fixed=True)
        else:
            limiter = Limiter(values_per_leaf=self.values_per_leaf)
            limiter.update(leaf_count)
        self.limiters[child] = limiter

    def set_leaf_count(self, child: Hashable, leaf_count: int) -> Optional[int]:
        limiter = self.limiters.get(child)
        if limiter is None:
            return None
        return limiter.update(leaf_count)

    def retire(self, child: Hashable):
        """Stop lending to ``child`` but let its current loans finish."""
        if child not in self.limiters:
            return
        if self.limiters[child].in_flight == 0:
            del self.limiters[child]
        else:
            self.retiring.add(child)

    def on_child_failure(self, child: Hashable) -> list[int]:
        """Forget ``child`` and put its loans back at the head of the queue."""
        self.limiters.pop(child, None)
        self.retiring.discard(child)
        requeued = sorted(s for s, c in self.outstanding.items() if c == child)
        for seq in requeued:
            del self.outstanding[seq]
            self.entries[seq].lent_to = None
        self.queue.extendleft(reversed(requeued))
        return requeued

    # -- values --------------------------------------------------------------

    def push(self, value: Any, tag: Any = None) -> int:
        seq = self.next_seq
        self.next_seq += 1
        self.entries[seq] = _Entry(seq if tag is None else tag, value)
        self.queue.append(seq)
        return seq

    def extend(self, values: Iterable[Any]):
        for value in values:
            self.push(value)

    def lend(self, child: Hashable) -> tuple[int, Any]:
        """Lend the head of the input queue to ``child``."""
        if not self.queue:
            raise LendError("input queue is empty")
        limiter = self.limiters.get(child)
        if limiter is None or child in self.retiring:
            raise LendError(f"{child!r} is not an active child")
        limiter.acquire()
        seq = self.queue.popleft()
        self.outstanding[seq] = child
        self.entries[seq].lent_to = child
        return seq, self.entries[seq].value

    def credit(self) -> int:
        return sum(l.credit() for c, l in self.limiters.items() if c not in self.retiring)

    def dispatch(self) -> list[tuple[Hashable, int, Any]]:
        """Lend as much as the limiters allow, one value per child per round."""
        loans = []
        while self.queue:
            active = [c for c in self.limiters if c not in self.retiring and self.limiters[c].admits()]
            if not active:
                break
            start = self._rr % len(active)
            for child in active[start:] + active[:start]:
                if not self.queue:
                    break
                seq, value = self.lend(child)
                loans.append((child, seq, value))
            self._rr += 1
        return loans

    def on_result(self, child: Hashable, seq: int, result: Any) -> list[tuple[Any, Any]]:
        """Accept a result and return the ``(tag, result)`` pairs now emittable, in order.

        Results from anyone but the current holder of ``seq`` are dropped,
        which is what makes re-lending safe.
        """
        if self.outstanding.get(seq) != child or child not in self.limiters:
            return []
        del self.outstanding[seq]
        limiter = self.limiters[child]
        limiter.release()
        if child in self.retiring and limiter.in_flight == 0:
            del self.limiters[child]
            self.retiring.discard(child)
        self.reorder_buffer[seq] = result
        emitted = []
        while self.next_output_seq in self.reorder_buffer:
            s = self.next_output_seq
            emitted.append((self.entries.pop(s).tag, self.reorder_buffer.pop(s)))
            self.next_output_seq += 1
        return emitted

    # -- inspection ----------------------------------------------------------

    def in_flight(self, child: Hashable) -> int:
        limiter = self.limiters.get(child)
        return limiter.in_flight if limiter else 0

    def pending(self) -> int:
        """Accepted inputs whose result has not been emitted yet."""
        return self.next_seq - self.next_output_seq

    def check_invariants(self):
        queued = set(self.queue)
        lent = set(self.outstanding)
        buffered = set(self.reorder_buffer)
        assert len(queued) == len(self.queue), "duplicate seq in queue"
        assert not (queued & lent or queued & buffered or lent & buffered), "seq in two places"
        live = queued | lent | buffered
        assert live == set(range(self.next_output_seq, self.next_seq)), "lost or phantom seq"
        for child, limiter in self.limiters.items():
            held = sum(1 for c in self.outstanding.values() if c == child)
            assert limiter.in_flight == held, f"in_flight drift for {child!r}"


class ThroughputMeter:
    """Timestamps of emitted results at the stream output."""

    def __init__(self):
        self.times: list[float] = []

    def record(self, t: float, count: int = 1):
        self.times.extend([t] * count)

    def count(self, start: float, end: float) -> int:
        return bisect_right(self.times, end) - bisect_right(self.times, start)

    def throughput(self, start: float, end: float) -> float:
        """Results per second emitted in ``(start, end]``."""
        window = end - start
        if window < MIN_THROUGHPUT_WINDOW_MS:
            raise ValueError(f"sampling window must be >= {MIN_THROUGHPUT_WINDOW_MS} ms")
        return self.count(start, end) / (window / 1000.0)
