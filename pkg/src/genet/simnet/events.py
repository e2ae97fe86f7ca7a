"""Virtual clock and event queue with deterministic tie-breaking."""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Any, Callable, Optional


@dataclass(order=True)
class Event:
    at: float
    seq: int
    target: Callable[..., Any] = field(compare=False)
    payload: tuple = field(default=(), compare=False)
    cancelled: bool = field(default=False, compare=False)

    def cancel(self):
        self.cancelled = True


class EventQueue:
    """Min-heap on ``(at, seq)``; ``seq`` is the insertion counter."""

    def __init__(self):
        self._heap: list[Event] = []
        self._counter = itertools.count()

    def __len__(self):
        return len(self._heap)

    def push(self, at: float, target: Callable[..., Any], *payload: Any) -> Event:
        event = Event(at, next(self._counter), target, payload)
        heapq.heappush(self._heap, event)
        return event

    def pop(self) -> Event:
        return heapq.heappop(self._heap)

    def peek(self) -> Optional[Event]:
        return self._heap[0] if self._heap else None


class Simulator:
    def __init__(self):
        self.now = 0.0
        self.queue = EventQueue()
        self.processed = 0

    def schedule(self, at: float, target: Callable[..., Any], *payload: Any) -> Event:
        if at < self.now:
            raise ValueError(f"cannot schedule at {at} before now={self.now}")
        return self.queue.push(at, target, *payload)

    def after(self, delay: float, target: Callable[..., Any], *payload: Any) -> Event:
        return self.schedule(self.now + delay, target, *payload)

    def step(self) -> Optional[Event]:
        while self.queue:
            event = self.queue.pop()
            if event.cancelled:
                continue
            assert event.at >= self.now, "clock went backwards"
            self.now = event.at
            event.target(*event.payload)
            self.processed += 1
            return event
        return None

    def run(self, until: Optional[float] = None, stop: Optional[Callable[[], bool]] = None) -> float:
        """Process events up to and including time ``until``.

        ``stop`` is polled after every event; returning True ends the run early.
        """
        while self.queue:
            head = self.queue.peek()
            if until is not None and head.at > until:
                self.now = until
                break
            if self.step() is None:
                break
            if stop is not None and stop():
                break
        else:
            if until is not None and until > self.now:
                self.now = until
        return self.now
