"""Connection-establishment scenarios: success probability and latency buckets.

Bucket weights come from measured WebRTC connection latencies on a local
testbed (``lan``), the same testbed with a distant signaling server
(``remote-relay``) and browsers spread over the Internet (``internet``).
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass


@dataclass(frozen=True)
class Bucket:
    lo: float
    hi: float
    prob: float


@dataclass(frozen=True)
class ConnectionSample:
    success: bool
    latency_ms: float


@dataclass(frozen=True)
class ScenarioPreset:
    name: str
    success_prob: float
    buckets: tuple[Bucket, ...]
    relay_hop_ms: float = 1.0
    link_hop_ms: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.success_prob <= 1.0:
            raise ValueError("success_prob must be in [0, 1]")
        if not self.buckets:
            raise ValueError("at least one latency bucket is required")
        total = math.fsum(b.prob for b in self.buckets)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"bucket probabilities sum to {total}, not 1")
        for b in self.buckets:
            if b.lo < 0 or b.hi <= 0 or b.hi < b.lo or b.prob < 0:
                raise ValueError(f"invalid bucket {b}")

    @property
    def max_latency_ms(self) -> float:
        return max(b.hi for b in self.buckets if b.prob > 0)

    def mass_below(self, latency_ms: float) -> float:
        """Configured probability of a latency strictly below ``latency_ms``."""
        mass = 0.0
        for b in self.buckets:
            if b.hi <= latency_ms:
                mass += b.prob
            elif b.lo < latency_ms:
                mass += b.prob * (latency_ms - b.lo) / (b.hi - b.lo)
        return mass


def sample_connection(preset: ScenarioPreset, rng: random.Random) -> ConnectionSample:
    success = rng.random() < preset.success_prob
    u = rng.random()
    acc = 0.0
    bucket = preset.buckets[-1]
    for b in preset.buckets:
        acc += b.prob
        if u < acc:
            bucket = b
            break
    # 1 - random() lies in (0, 1], so latency > lo and a [x, x] bucket gives x
    latency = bucket.lo + (bucket.hi - bucket.lo) * (1.0 - rng.random())
    return ConnectionSample(success, latency)


def _from_counts(edges_counts, total):
    return tuple(Bucket(lo, hi, c / total) for (lo, hi), c in edges_counts)


# 380 connections; 363 under 500 ms. The 300-400 ms bin is not reported, so
# its count is merged with 400-500 ms; the rest falls in 500-1000 ms.
LAN = ScenarioPreset(
    "lan",
    success_prob=1.0,
    buckets=_from_counts(
        [((0, 100), 41), ((100, 200), 112), ((200, 300), 132), ((300, 500), 78), ((500, 1000), 17)],
        380,
    ),
    relay_hop_ms=1.0,
    link_hop_ms=1.0,
)

_REMOTE_FAST = [
    ((0, 100), 16), ((100, 200), 123), ((200, 300), 82), ((300, 400), 31),
    ((400, 500), 29), ((500, 600), 36), ((600, 700), 17),
]
_REMOTE_FAST_TOTAL = sum(c for _, c in _REMOTE_FAST)

# sub-700 ms bins carry 89% of the mass; the rest is a slow tail up to 16 s
REMOTE_RELAY = ScenarioPreset(
    "remote-relay",
    success_prob=1.0,
    buckets=tuple(
        Bucket(lo, hi, 0.89 * c / _REMOTE_FAST_TOTAL) for (lo, hi), c in _REMOTE_FAST
    ) + (Bucket(1000, 16000, 0.11),),
    relay_hop_ms=20.0,
    link_hop_ms=1.0,
)

INTERNET = ScenarioPreset(
    "internet",
    success_prob=0.487,
    buckets=(Bucket(500, 8500, 1.0),),
    relay_hop_ms=50.0,
    link_hop_ms=50.0,
)

PRESETS: dict[str, ScenarioPreset] = {p.name: p for p in (LAN, REMOTE_RELAY, INTERNET)}


def get_preset(name: str) -> ScenarioPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(PRESETS)}") from None
