from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable

from genet.identity import NodeId


@dataclass(frozen=True)
class FailurePlan:
    """Fail each non-root node independently with ``probability`` at time ``when``.

    With ``rejoin`` the failed nodes come back through the root like their
    disconnected descendants; otherwise they crash for good.
    """

    probability: float
    when: float = 0.0
    rejoin: bool = False

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("failure probability must be in [0, 1]")


def inject_failures(
    nodes: Iterable[NodeId], root: NodeId, plan: FailurePlan, rng: random.Random
) -> set[NodeId]:
    """Draw the failed set; one uniform draw per non-root node, in iteration order."""
    return {n for n in nodes if n != root and rng.random() < plan.probability}
