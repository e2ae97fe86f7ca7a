"""Per-node overlay protocol: adopt-or-delegate joins, child slots, timeouts,
failure cascade and subtree status reports.

A :class:`NodeState` is a plain state machine. It never sends anything itself;
every handler returns what the caller (a simulator or a real transport) has to
do next. All times are in milliseconds of simulation time.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Optional, Union

from genet.identity import DEFAULT_CHILDREN_LIMIT, NodeId, route_hash, route_index
from genet.messages import JOIN, SIGNAL_REPLY, STATUS, Message, join_signal, signal_session

DEFAULT_CANDIDATE_TIMEOUT_MS = 60_000.0
DEFAULT_REPORT_INTERVAL_MS = 3_000.0
DEFAULT_SIGNALS_PER_JOIN = 3


class SlotState(Enum):
    FREE = "free"
    PENDING = "pending"
    CONNECTED = "connected"


@dataclass
class StatusReport:
    """Subtree summary sent from a node to its parent.

    ``child_count`` is the number of descendants below the reporter, so the
    reporter's subtree holds ``child_count + 1`` nodes.
    """

    reporter: NodeId
    leaf_count: int
    child_count: int
    timestamp: float

    def to_message(self, parent: NodeId) -> Message:
        payload = json.dumps({"leaf_count": self.leaf_count, "child_count": self.child_count})
        return Message(STATUS, self.reporter, parent, payload, self.timestamp)

    @classmethod
    def from_message(cls, msg: Message) -> StatusReport:
        body = json.loads(msg.payload)
        return cls(msg.origin, int(body["leaf_count"]), int(body["child_count"]), msg.ts)


@dataclass
class ChildSlot:
    index: int
    state: SlotState = SlotState.FREE
    peer: Optional[NodeId] = None
    deadline: Optional[float] = None
    session: Optional[str] = None
    channel: Any = None
    report: Optional[StatusReport] = None

    def clear(self):
        self.state = SlotState.FREE
        self.peer = None
        self.deadline = None
        self.session = None
        self.channel = None
        self.report = None


@dataclass(frozen=True)
class Adopt:
    """The candidate is (or already was) assigned to ``slot``.

    ``new`` is False when the message continues an attempt already in
    progress on that slot (a later trickled signal).
    """

    slot: int
    new: bool = True


@dataclass(frozen=True)
class Delegate:
    slot: int
    child: NodeId


@dataclass(frozen=True)
class Hold:
    slot: int


RoutingAction = Union[Adopt, Delegate, Hold]


@dataclass
class Rejoin:
    """Outcome of a parent failure: this node rejoins, these children were cut off."""

    node: NodeId
    closed_children: list[NodeId] = field(default_factory=list)


class NodeState:
    """Protocol state of one overlay node."""

    def __init__(
        self,
        id: NodeId,
        parent: Optional[NodeId] = None,
        depth: Optional[int] = 0,
        children_limit: int = DEFAULT_CHILDREN_LIMIT,
        candidate_timeout: float = DEFAULT_CANDIDATE_TIMEOUT_MS,
        hash_fn: Callable[[bytes], int] = route_hash,
        root: Optional[bool] = None,
    ):
        if children_limit < 1:
            raise ValueError("children_limit must be >= 1")
        self.id = id
        self.parent = parent
        self.depth = depth
        self.children_limit = children_limit
        self.candidate_timeout = candidate_timeout
        self.hash_fn = hash_fn
        self.root = parent is None if root is None else root
        self.slots = [ChildSlot(i) for i in range(children_limit)]
        self.hold_queues: list[deque[Message]] = [deque() for _ in range(children_limit)]

    def __repr__(self):
        kids = sum(s.state is SlotState.CONNECTED for s in self.slots)
        return f"<NodeState {self.id.hex()[:8]} depth={self.depth} children={kids}>"

    @property
    def connected(self) -> bool:
        return self.root or self.parent is not None

    def slot_of(self, peer: NodeId) -> Optional[ChildSlot]:
        for slot in self.slots:
            if slot.peer == peer and slot.state is not SlotState.FREE:
                return slot
        return None

    def connected_children(self) -> list[NodeId]:
        return [s.peer for s in self.slots if s.state is SlotState.CONNECTED]

    def occupied(self) -> int:
        return sum(s.state is not SlotState.FREE for s in self.slots)

    def is_full(self) -> bool:
        return self.occupied() == self.children_limit

    def is_leaf(self) -> bool:
        return not any(s.state is SlotState.CONNECTED for s in self.slots)

    # -- joins ---------------------------------------------------------------

    def handle_join(self, msg: Message, now: float) -> RoutingAction:
        if msg.type != JOIN:
            raise ValueError(f"not a join message: {msg.type}")
        if msg.origin == self.id:
            raise ValueError("a node cannot join itself")
        session = signal_session(msg.payload)

        existing = self.slot_of(msg.origin)
        if existing is not None:
            if existing.state is SlotState.PENDING and existing.session != session:
                # a retried attempt replaces the stale one on the same slot
                existing.session = session
                existing.deadline = now + self.candidate_timeout
                return Adopt(existing.index, new=True)
            return Adopt(existing.index, new=False)

        for slot in self.slots:
            if slot.state is SlotState.FREE:
                slot.state = SlotState.PENDING
                slot.peer = msg.origin
                slot.session = session
                slot.deadline = now + self.candidate_timeout
                return Adopt(slot.index)

        index = route_index(msg.origin, self.id, self.children_limit, self.hash_fn)
        target = self.slots[index]
        if target.state is SlotState.CONNECTED:
            return Delegate(index, target.peer)
        self.hold_queues[index].append(msg)
        return Hold(index)

    def on_child_connected(self, index: int, now: float, channel: Any = None) -> list[Message]:
        """Promote a pending slot; returns the held messages to forward, FIFO."""
        slot = self.slots[index]
        if slot.state is not SlotState.PENDING:
            raise ValueError(f"slot {index} is {slot.state.value}, not pending")
        slot.state = SlotState.CONNECTED
        slot.deadline = None
        slot.channel = channel
        held = list(self.hold_queues[index])
        self.hold_queues[index].clear()
        return held

    def on_candidate_timeout(self, index: int, now: float) -> bool:
        """Free a pending slot whose deadline passed. Returns True if freed."""
        slot = self.slots[index]
        if slot.state is not SlotState.PENDING or now < slot.deadline:
            return False
        slot.clear()
        self.hold_queues[index].clear()
        return True

    def expire_candidates(self, now: float) -> list[int]:
        return [s.index for s in self.slots if self.on_candidate_timeout(s.index, now)]

    def on_child_disconnected(self, child: NodeId) -> Optional[int]:
        slot = self.slot_of(child)
        if slot is None:
            return None
        slot.clear()
        self.hold_queues[slot.index].clear()
        return slot.index

    def on_parent_failure(self) -> Rejoin:
        """Drop every child and the parent link; the node keeps its id and rejoins."""
        closed = [s.peer for s in self.slots if s.state is not SlotState.FREE]
        for slot in self.slots:
            slot.clear()
        for queue in self.hold_queues:
            queue.clear()
        self.parent = None
        self.depth = None
        self.root = False
        return Rejoin(self.id, closed)

    def attach(self, parent: NodeId, parent_depth: int):
        self.parent = parent
        self.depth = parent_depth + 1

    # -- status --------------------------------------------------------------

    def record_report(self, report: StatusReport) -> bool:
        """Store a child's report. Returns True if this node's own summary changed."""
        slot = self.slot_of(report.reporter)
        if slot is None or slot.state is not SlotState.CONNECTED:
            return False
        before = self._summary()
        slot.report = report
        return self._summary() != before

    def _summary(self) -> tuple[int, int]:
        leaves = descendants = 0
        for slot in self.slots:
            if slot.state is not SlotState.CONNECTED:
                continue
            # a child that has not reported yet is a fresh leaf
            if slot.report is None:
                leaves += 1
                descendants += 1
            else:
                leaves += slot.report.leaf_count
                descendants += slot.report.child_count + 1
        if descendants == 0:
            return 1, 0
        return leaves, descendants

    def report_status(self, now: float) -> StatusReport:
        leaves, descendants = self._summary()
        return StatusReport(self.id, leaves, descendants, now)


def node_depth(node: NodeState) -> int:
    if not node.connected or node.depth is None:
        raise ValueError(f"{node!r} is not connected")
    return node.depth


class Candidate:
    """Joining side of the protocol: trickles signals, tracks replies, retries.

    With ``reply_routing`` on, signals sent after the first reply go straight
    to the replying node instead of through the root.
    """

    def __init__(
        self,
        id: NodeId,
        root: NodeId,
        signals_per_join: int = DEFAULT_SIGNALS_PER_JOIN,
        reply_routing: bool = True,
        timeout: float = DEFAULT_CANDIDATE_TIMEOUT_MS,
    ):
        self.id = id
        self.root = root
        self.signals_per_join = signals_per_join
        self.reply_routing = reply_routing
        self.timeout = timeout
        self.attempt = 0
        self.sent = 0
        self.reply_from: Optional[NodeId] = None
        self.deadline: Optional[float] = None
        self.connected = False

    @property
    def session(self) -> str:
        return f"a{self.attempt}"

    def start(self, now: float):
        self.attempt += 1
        self.sent = 0
        self.reply_from = None
        self.deadline = now + self.timeout
        self.connected = False

    def destination(self) -> NodeId:
        if self.reply_routing and self.reply_from is not None:
            return self.reply_from
        return self.root

    def has_signals(self) -> bool:
        return not self.connected and self.sent < self.signals_per_join

    def next_signal(self, now: float) -> Message:
        if not self.has_signals():
            raise RuntimeError("no signals left in this attempt")
        msg = join_signal(self.id, self.destination(), self.session, self.sent, now)
        self.sent += 1
        return msg

    def on_reply(self, msg: Message) -> bool:
        """Record a reply signal. Returns False for replies to an older attempt."""
        if msg.type != SIGNAL_REPLY or signal_session(msg.payload) != self.session:
            return False
        if self.reply_from is None:
            self.reply_from = msg.origin
        return True

    def timed_out(self, now: float) -> bool:
        return not self.connected and self.deadline is not None and now >= self.deadline
