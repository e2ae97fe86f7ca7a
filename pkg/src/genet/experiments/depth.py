"""Depth census of trees grown by sequential joins, with optional failures.

Two builders produce the same trees from the same random draws:

* ``fast``: a numba kernel over byte arrays, used for the large runs;
* ``protocol``: drives :class:`~genet.overlay.NodeState` objects with
  instantly-opening connections, used as the reference.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np
from scipy.stats import ks_2samp

from genet.identity import (
    DEFAULT_CHILDREN_LIMIT,
    DEFAULT_HASH,
    HASHES,
    ID_BYTES,
    NodeId,
    balanced_depth,
)
from genet.messages import join_signal
from genet.overlay import Adopt, Delegate, NodeState

REJOIN_ORDERS = ("random", "join")

CSV_COLUMNS = [
    "trial", "n", "failure", "children_limit", "balanced_depth",
    "extra_fraction", "deeper2_count", "max_depth", "disconnected",
]


@numba.njit(cache=True)
def _route(a, b, limit, finalize):
    h = np.uint64(14695981039346656037)
    for i in range(a.shape[0]):
        h ^= np.uint64(a[i] ^ b[i])
        h *= np.uint64(1099511628211)
    if finalize:
        h ^= h >> np.uint64(33)
        h *= np.uint64(0xFF51AFD7ED558CCD)
        h ^= h >> np.uint64(33)
        h *= np.uint64(0xC4CEB9FE1A85EC53)
        h ^= h >> np.uint64(33)
    return np.int64(h % np.uint64(limit))


@numba.njit(cache=True)
def _join(ids, children, nchild, parent, depth, node, limit, finalize):
    cur = 0
    while True:
        if nchild[cur] < limit:
            for s in range(limit):
                if children[cur, s] < 0:
                    children[cur, s] = node
                    nchild[cur] += 1
                    parent[node] = cur
                    depth[node] = depth[cur] + 1
                    return
        cur = children[cur, _route(ids[node], ids[cur], limit, finalize)]


@numba.njit(cache=True)
def _build(ids, limit, finalize, failed, order):
    n = ids.shape[0]
    children = -np.ones((n, limit), np.int64)
    nchild = np.zeros(n, np.int64)
    parent = -np.ones(n, np.int64)
    depth = np.zeros(n, np.int64)
    for i in range(1, n):
        _join(ids, children, nchild, parent, depth, i, limit, finalize)

    # the first build joins in index order, so parent[i] < i
    gone = np.zeros(n, np.bool_)
    for i in range(1, n):
        gone[i] = failed[i] or gone[parent[i]]
    for i in range(1, n):
        if gone[i] and not gone[parent[i]]:
            p = parent[i]
            for s in range(limit):
                if children[p, s] == i:
                    children[p, s] = -1
            nchild[p] -= 1
    for i in range(n):
        if gone[i]:
            for s in range(limit):
                children[i, s] = -1
            nchild[i] = 0
    for k in range(order.shape[0]):
        i = order[k]
        if gone[i]:
            _join(ids, children, nchild, parent, depth, i, limit, finalize)
    return depth, gone.sum()


def build_fast(ids, children_limit, hash_name, failed, order):
    if hash_name not in ("fnv1a", "fnv1a-mix"):
        raise ValueError(f"fast builder does not support hash {hash_name!r}")
    return _build(ids, children_limit, hash_name == "fnv1a-mix", failed, order)


def build_protocol(ids, children_limit, hash_name, failed, order):
    """Same construction, through the overlay state machine."""
    hash_fn = HASHES[hash_name]
    node_ids = [NodeId.from_bytes(bytes(row)) for row in ids]
    index = {nid: i for i, nid in enumerate(node_ids)}
    states = [NodeState(node_ids[0], children_limit=children_limit, hash_fn=hash_fn)]
    states += [
        NodeState(nid, depth=None, children_limit=children_limit, hash_fn=hash_fn, root=False)
        for nid in node_ids[1:]
    ]

    def join(i):
        msg = join_signal(node_ids[i], node_ids[0], "a0", 0)
        cur = states[0]
        while True:
            action = cur.handle_join(msg, 0.0)
            if isinstance(action, Adopt):
                held = cur.on_child_connected(action.slot, 0.0)
                assert not held, "instant connections never hold"
                states[i].attach(cur.id, cur.depth)
                return
            assert isinstance(action, Delegate), action
            cur = states[index[action.child]]

    for i in range(1, len(states)):
        join(i)

    gone = np.zeros(len(states), bool)
    for i in range(1, len(states)):
        gone[i] = failed[i] or gone[index[states[i].parent]]
    for i in np.flatnonzero(gone):
        parent = states[index[states[i].parent]]
        if not gone[index[parent.id]]:
            parent.on_child_disconnected(states[i].id)
    for i in np.flatnonzero(gone):
        states[i].on_parent_failure()
    for i in order:
        if gone[i]:
            join(i)
    depth = np.array([s.depth for s in states], dtype=np.int64)
    return depth, int(gone.sum())


BUILDERS = {"fast": build_fast, "protocol": build_protocol}


def trial_draws(seed: int, trials: int, n: int, failure: float, rejoin_order: str = "random"):
    """Per-trial ids, failure mask and rejoin order.

    Ids come from their own stream, so every failure level of one seed starts
    from the same trees.
    """
    if rejoin_order not in REJOIN_ORDERS:
        raise ValueError(f"rejoin_order must be one of {REJOIN_ORDERS}")
    for child in np.random.SeedSequence(seed).spawn(trials):
        id_seq, fail_seq = child.spawn(2)
        ids = np.random.default_rng(id_seq).integers(0, 256, size=(n, ID_BYTES), dtype=np.uint8)
        failed = np.zeros(n, dtype=np.bool_)
        order = np.arange(n, dtype=np.int64)
        if failure > 0:
            rng = np.random.default_rng(fail_seq)
            failed = rng.random(n) < failure
            failed[0] = False
            if rejoin_order == "random":
                order = rng.permutation(n).astype(np.int64)
        yield ids, failed, order


@dataclass
class DepthExperimentResult:
    n: int
    failure: float
    trials: int
    seed: int
    children_limit: int = DEFAULT_CHILDREN_LIMIT
    balanced_depth: int = 0
    extra_fraction_per_trial: list[float] = field(default_factory=list)
    deeper2_per_trial: list[int] = field(default_factory=list)
    max_depth_per_trial: list[int] = field(default_factory=list)
    disconnected_per_trial: list[int] = field(default_factory=list)

    @property
    def deeper2_count(self) -> int:
        return sum(self.deeper2_per_trial)

    @property
    def fractions(self) -> np.ndarray:
        return np.asarray(self.extra_fraction_per_trial)

    def mean_extra(self) -> float:
        return float(self.fractions.mean())

    def max_extra(self) -> float:
        return float(self.fractions.max())

    def share_of_trials_at_most(self, fraction: float) -> float:
        return float((self.fractions <= fraction + 1e-12).mean())

    def cdf(self, points) -> list[float]:
        return [self.share_of_trials_at_most(p) for p in points]

    def summary(self) -> dict:
        return {
            "n": self.n,
            "failure": self.failure,
            "trials": self.trials,
            "seed": self.seed,
            "children_limit": self.children_limit,
            "balanced_depth": self.balanced_depth,
            "mean_extra_fraction": round(self.mean_extra(), 6),
            "max_extra_fraction": round(self.max_extra(), 6),
            "trials_at_most_8pct": round(self.share_of_trials_at_most(0.08), 6),
            "deeper2_count": self.deeper2_count,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for t, (frac, d2, md, disc) in enumerate(zip(
            self.extra_fraction_per_trial, self.deeper2_per_trial,
            self.max_depth_per_trial, self.disconnected_per_trial,
        )):
            writer.writerow([
                t, self.n, f"{self.failure:g}", self.children_limit, self.balanced_depth,
                f"{frac:.6f}", d2, md, disc,
            ])
        return buf.getvalue()


def run_depth_experiment(
    n: int,
    trials: int,
    failure: float = 0.0,
    seed: int = 0,
    children_limit: int = DEFAULT_CHILDREN_LIMIT,
    hash_name: str = DEFAULT_HASH,
    rejoin_order: str = "random",
    engine: str = "fast",
) -> DepthExperimentResult:
    """Grow ``trials`` trees of ``n`` nodes (root included) and count deep nodes.

    With ``failure > 0`` every non-root node fails with that probability after
    the tree is built; failed nodes and everything below them rejoin through
    the root.
    """
    if n < 1 or trials < 1:
        raise ValueError("n and trials must be >= 1")
    if not 0.0 <= failure <= 1.0:
        raise ValueError("failure must be in [0, 1]")
    build = BUILDERS[engine]
    bd = balanced_depth(n, children_limit)
    result = DepthExperimentResult(n, failure, trials, seed, children_limit, bd)
    for ids, failed, order in trial_draws(seed, trials, n, failure, rejoin_order):
        depth, disconnected = build(ids, children_limit, hash_name, failed, order)
        result.extra_fraction_per_trial.append(float(np.count_nonzero(depth > bd)) / n)
        result.deeper2_per_trial.append(int(np.count_nonzero(depth >= bd + 2)))
        result.max_depth_per_trial.append(int(depth.max()))
        result.disconnected_per_trial.append(int(disconnected))
    return result


def depth_census(
    n: int, seed: int = 0, failure: float = 0.0, children_limit: int = DEFAULT_CHILDREN_LIMIT,
    engine: str = "fast", rejoin_order: str = "random",
) -> np.ndarray:
    """Depth of every node of a single tree (index 0 is the root)."""
    ids, failed, order = next(trial_draws(seed, 1, n, failure, rejoin_order))
    depth, _ = BUILDERS[engine](ids, children_limit, DEFAULT_HASH, failed, order)
    return depth


def ks_distance(a: DepthExperimentResult, b: DepthExperimentResult) -> float:
    """Two-sample Kolmogorov-Smirnov distance between extra-fraction distributions."""
    return float(ks_2samp(a.fractions, b.fractions).statistic)


def cdf_table(results: list[DepthExperimentResult], points: Optional[list[float]] = None) -> str:
    """CSV of the share of trials with at most x of nodes in the extra level."""
    points = points if points is not None else [i / 100 for i in range(0, 21)]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "failure", "extra_fraction_at_most", "share_of_trials"])
    for r in results:
        for p, share in zip(points, r.cdf(points)):
            writer.writerow([r.n, f"{r.failure:g}", f"{p:.2f}", f"{share:.6f}"])
    return buf.getvalue()
