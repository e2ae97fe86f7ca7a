"""Discrete-event simulation of a whole overlay: candidates, relay, nodes,
status reports, failures and (optionally) a streaming-map workload.

Control traffic (joins, replies, status, relay registrations) can be recorded
as a trace of JSON objects. Data traffic of the workload is not traced.
"""
from __future__ import annotations

import itertools
import json
import random
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional, Union

from genet.identity import DEFAULT_HASH, HASHES, NodeId, new_random_id
from genet.messages import JOIN, SIGNAL_REPLY, Message, signal_session
from genet.overlay import Adopt, Candidate, Delegate, NodeState, SlotState, StatusReport
from genet.relay import RelayRegistry, Undeliverable
from genet.simnet.events import Simulator
from genet.simnet.failures import FailurePlan, inject_failures
from genet.simnet.presets import ScenarioPreset, get_preset, sample_connection
from genet.streammap import LOCAL, StreamLender, Task, ThroughputMeter

# keys every config file must provide
CONFIG_KEYS = ("scenario", "seed", "children_limit", "timeout_ms", "report_interval_ms", "startup_delay_ms")


@dataclass
class SimConfig:
    scenario: str = "lan"
    seed: int = 0
    children_limit: int = 10
    timeout_ms: float = 60_000.0
    report_interval_ms: float = 3_000.0
    startup_delay_ms: float = 1_500.0
    signals_per_join: int = 3
    signal_spacing_ms: float = 5.0
    reply_routing: bool = True
    relay_linger_ms: float = 30_000.0
    retry_backoff_ms: float = 1_000.0
    failure_detection_ms: float = 0.0
    values_per_leaf: int = 2
    hash: str = DEFAULT_HASH

    def __post_init__(self):
        get_preset(self.scenario)
        if self.children_limit < 1:
            raise ValueError("children_limit must be >= 1")
        if self.report_interval_ms <= 0 or self.timeout_ms <= 0:
            raise ValueError("intervals must be positive")
        if self.hash not in HASHES:
            raise ValueError(f"unknown hash {self.hash!r}")

    @classmethod
    def from_dict(cls, data: dict) -> SimConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: Union[str, Path]) -> SimConfig:
        data = json.loads(Path(path).read_text())
        missing = [k for k in CONFIG_KEYS if k not in data]
        if missing:
            raise ValueError(f"config file missing keys: {missing}")
        return cls.from_dict(data)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


@dataclass(frozen=True)
class Sample:
    t_ms: float
    connected_count: int
    leaf_count: int
    results_per_s: float


class SimChannel:
    """Relay-side endpoint of one registered peer."""

    def __init__(self, net: OverlayNetwork, owner: NodeId):
        self.net = net
        self.owner = owner

    def send(self, msg: Message):
        self.net.sim.after(self.net.preset.relay_hop_ms, self.net._on_relay_delivery, self.owner, msg)


@dataclass
class SimNode:
    state: NodeState
    epoch: int = 0
    alive: bool = True
    lender: Optional[StreamLender] = None
    report_event: Any = None
    linger_until: float = 0.0

    @property
    def id(self) -> NodeId:
        return self.state.id


@dataclass
class Workload:
    task: Task = field(default_factory=Task)
    source: Optional[Iterable[Any]] = None  # None: the naturals, forever


class OverlayNetwork:
    def __init__(self, config: Optional[SimConfig] = None, workload: Optional[Workload] = None, trace: bool = False):
        self.config = config or SimConfig()
        self.preset: ScenarioPreset = get_preset(self.config.scenario)
        self.hash_fn = HASHES[self.config.hash]
        self.rng = random.Random(self.config.seed)
        self.sim = Simulator()
        self.trace: Optional[list[dict]] = [] if trace else None

        root_id = new_random_id(self.rng)
        self.root_id = root_id
        self.nodes: dict[NodeId, SimNode] = {root_id: SimNode(self._new_state(root_id, None, 0))}
        self.candidates: dict[NodeId, Candidate] = {}
        self.relay = RelayRegistry(root_id, SimChannel(self, root_id))
        self._trace_relay("register", root_id)

        self.workload = workload
        self.outputs: list[tuple[Any, Any]] = []
        self.meter = ThroughputMeter()
        self._source: Optional[Iterator[Any]] = None
        if workload is not None:
            self._source = iter(workload.source) if workload.source is not None else itertools.count()
            self.root.lender = StreamLender(self.config.values_per_leaf)

        self.samples: list[Sample] = []
        self.failed: set[NodeId] = set()
        self.joined_at: dict[NodeId, float] = {}
        self.expected_members = 0
        self.sim.schedule(self.config.report_interval_ms, self._sample_tick)

    # -- helpers -------------------------------------------------------------

    @property
    def root(self) -> SimNode:
        return self.nodes[self.root_id]

    @property
    def now(self) -> float:
        return self.sim.now

    def _new_state(self, id: NodeId, parent: Optional[NodeId], depth: Optional[int]) -> NodeState:
        return NodeState(
            id,
            parent=parent,
            depth=depth,
            children_limit=self.config.children_limit,
            candidate_timeout=self.config.timeout_ms,
            hash_fn=self.hash_fn,
            root=parent is None and depth == 0,
        )

    def _record(self, msg: Message):
        if self.trace is not None:
            self.trace.append(msg.at(self.now).to_dict())

    def _trace_relay(self, kind: str, id: NodeId):
        if self.trace is not None:
            self.trace.append({"type": kind, "origin": id.hex(), "to": None, "payload": "", "ts": self.now})

    def _attached(self, id: NodeId) -> Optional[SimNode]:
        node = self.nodes.get(id)
        if node is None or not node.alive or not node.state.connected:
            return None
        return node

    def members(self) -> list[SimNode]:
        return [n for n in self.nodes.values() if n.alive and n.state.connected]

    def leaf_count(self) -> int:
        """Ground-truth number of processors (non-root members without children)."""
        return sum(1 for n in self.members() if not n.state.root and n.state.is_leaf())

    def tree_depth(self) -> int:
        return max(n.state.depth for n in self.members())

    def reachable(self) -> set[NodeId]:
        """Members reachable from the root through connected slots."""
        seen = {self.root_id}
        stack = [self.root_id]
        while stack:
            node = self.nodes[stack.pop()]
            for child in node.state.connected_children():
                if child not in seen:
                    seen.add(child)
                    stack.append(child)
        return seen

    def dangling_references(self) -> list[tuple[NodeId, NodeId]]:
        """(holder, failed) pairs where a live node still points at a failed one."""
        bad = []
        for node in self.members():
            refs = list(node.state.connected_children())
            if node.state.parent is not None:
                refs.append(node.state.parent)
            bad.extend((node.id, r) for r in refs if r in self.failed)
        return bad

    # -- relay ---------------------------------------------------------------

    def _register(self, id: NodeId):
        if id not in self.relay:
            self.relay.register(id, SimChannel(self, id))
            self._trace_relay("register", id)

    def _unregister(self, id: NodeId):
        if id in self.relay and id != self.root_id:
            self.relay.unregister(id)
            self._trace_relay("unregister", id)

    def _send_via_relay(self, msg: Message):
        msg = msg.at(self.now)
        self._record(msg)
        self.sim.after(self.preset.relay_hop_ms, self._relay_forward, msg)

    def _relay_forward(self, msg: Message):
        try:
            self.relay.forward(msg)
        except Undeliverable:
            self.sim.after(self.preset.relay_hop_ms, self._on_undeliverable, msg)

    def _on_relay_delivery(self, owner: NodeId, msg: Message):
        if msg.type == JOIN:
            node = self._attached(owner)
            if node is not None:
                self._handle_join(node, msg)
        elif msg.type == SIGNAL_REPLY:
            cand = self.candidates.get(owner)
            if cand is not None:
                cand.on_reply(msg)

    def _on_undeliverable(self, msg: Message):
        cand = self.candidates.get(msg.origin)
        if cand is None or cand.connected or signal_session(msg.payload) != cand.session:
            return
        # give up on this attempt early and retry through the root
        attempt = cand.attempt
        cand.deadline = self.now
        self.sim.after(self.config.retry_backoff_ms, self._retry, msg.origin, attempt)

    def _touch_relay(self, node: SimNode):
        self._register(node.id)
        node.linger_until = self.now + self.config.relay_linger_ms
        self.sim.schedule(node.linger_until, self._linger_check, node.id, node.epoch)

    def _linger_check(self, id: NodeId, epoch: int):
        node = self.nodes.get(id)
        if node is None or node.epoch != epoch or id in self.candidates:
            return
        if self.now >= node.linger_until:
            self._unregister(id)

    # -- joining -------------------------------------------------------------

    def schedule_joins(self, count: int, rate_per_s: float, start: Optional[float] = None):
        """``count`` new candidates arriving at ``rate_per_s``, from ``start`` (default: startup)."""
        if rate_per_s <= 0:
            raise ValueError("join rate must be positive")
        start = self.config.startup_delay_ms if start is None else start
        for i in range(count):
            self.sim.schedule(start + i * 1000.0 / rate_per_s, self._arrive)
        self.expected_members += count

    def _arrive(self):
        cid = new_random_id(self.rng)
        self._become_candidate(cid)

    def _become_candidate(self, id: NodeId):
        cand = Candidate(
            id,
            self.root_id,
            signals_per_join=self.config.signals_per_join,
            reply_routing=self.config.reply_routing,
            timeout=self.config.timeout_ms,
        )
        self.candidates[id] = cand
        self._register(id)
        self._start_attempt(cand)

    def _start_attempt(self, cand: Candidate):
        cand.start(self.now)
        for i in range(cand.signals_per_join):
            self.sim.after(i * self.config.signal_spacing_ms, self._send_signal, cand.id, cand.attempt)
        self.sim.schedule(cand.deadline, self._candidate_deadline, cand.id, cand.attempt)

    def _send_signal(self, cid: NodeId, attempt: int):
        cand = self.candidates.get(cid)
        if cand is None or cand.attempt != attempt or not cand.has_signals():
            return
        self._send_via_relay(cand.next_signal(self.now))

    def _candidate_deadline(self, cid: NodeId, attempt: int):
        cand = self.candidates.get(cid)
        if cand is not None and cand.attempt == attempt and cand.timed_out(self.now):
            self._start_attempt(cand)

    def _retry(self, cid: NodeId, attempt: int):
        cand = self.candidates.get(cid)
        if cand is not None and cand.attempt == attempt and not cand.connected:
            self._start_attempt(cand)

    def _handle_join(self, node: SimNode, msg: Message):
        action = node.state.handle_join(msg, self.now)
        if isinstance(action, Adopt):
            self._touch_relay(node)
            session = signal_session(msg.payload)
            reply = Message(SIGNAL_REPLY, node.id, msg.origin, f"{session}/r{msg.payload.rsplit('/', 1)[-1]}")
            self._send_via_relay(reply)
            if action.new:
                slot = node.state.slots[action.slot]
                outcome = sample_connection(self.preset, self.rng)
                if outcome.success:
                    self.sim.after(
                        outcome.latency_ms, self._connection_open,
                        node.id, node.epoch, action.slot, msg.origin, session,
                    )
                self.sim.schedule(slot.deadline, self._slot_deadline, node.id, node.epoch, action.slot, session)
        elif isinstance(action, Delegate):
            self.sim.after(self.preset.link_hop_ms, self._delegated, node.id, action.child, msg)

    def _delegated(self, parent: NodeId, child: NodeId, msg: Message):
        node = self._attached(child)
        # a message in flight toward a node that left the tree is stranded
        if node is not None and node.state.parent == parent:
            self._handle_join(node, msg)

    def _slot_deadline(self, nid: NodeId, epoch: int, index: int, session: str):
        node = self.nodes.get(nid)
        if node is None or node.epoch != epoch:
            return
        slot = node.state.slots[index]
        if slot.state is SlotState.PENDING and slot.session == session:
            node.state.on_candidate_timeout(index, self.now)

    def _connection_open(self, nid: NodeId, epoch: int, index: int, cid: NodeId, session: str):
        node = self.nodes.get(nid)
        if node is None or node.epoch != epoch or not node.alive:
            return
        slot = node.state.slots[index]
        if slot.state is not SlotState.PENDING or slot.peer != cid or slot.session != session:
            return
        cand = self.candidates.get(cid)
        if cand is None or cand.connected:
            # the candidate got in elsewhere first
            node.state.on_child_disconnected(cid)
            return

        held = node.state.on_child_connected(index, self.now)
        cand.connected = True
        del self.candidates[cid]
        self._unregister(cid)

        child = self.nodes.get(cid)
        if child is None:
            child = SimNode(self._new_state(cid, None, None))
            self.nodes[cid] = child
        else:
            child.epoch += 1
        child.state.attach(nid, node.state.depth)
        self.joined_at[cid] = self.now
        child.report_event = self.sim.after(
            self.config.report_interval_ms, self._report_tick, cid, child.epoch
        )
        for msg in held:
            self.sim.after(self.preset.link_hop_ms, self._delegated, nid, cid, msg)

        if self.workload is not None:
            child.lender = StreamLender(self.config.values_per_leaf)
            child.lender.add_child(LOCAL, limit=1)
            lender = node.lender
            if LOCAL in lender.limiters:
                lender.retire(LOCAL)
            lender.add_child(cid)
            self._dispatch(node)
        self._propagate(node)

    # -- status --------------------------------------------------------------

    def _report_tick(self, nid: NodeId, epoch: int):
        node = self.nodes.get(nid)
        if node is None or node.epoch != epoch or self._attached(nid) is None:
            return
        self._send_report(node)
        node.report_event = self.sim.after(self.config.report_interval_ms, self._report_tick, nid, epoch)

    def _send_report(self, node: SimNode):
        report = node.state.report_status(self.now)
        parent = node.state.parent
        self._record(report.to_message(parent))
        self.sim.after(self.preset.link_hop_ms, self._on_report, parent, node.id, node.epoch, report)

    def _on_report(self, pid: NodeId, cid: NodeId, child_epoch: int, report: StatusReport):
        parent = self._attached(pid)
        child = self.nodes.get(cid)
        if parent is None or child is None or child.epoch != child_epoch:
            return
        changed = parent.state.record_report(report)
        if parent.lender is not None:
            parent.lender.set_leaf_count(cid, report.leaf_count)
            self._dispatch(parent)
        if changed:
            self._propagate(parent)

    def _propagate(self, node: SimNode):
        """Forward a changed subtree summary upward without waiting for the next tick."""
        if not node.state.root and node.state.parent is not None:
            self._send_report(node)

    def _sample_tick(self):
        interval = self.config.report_interval_ms
        summary = self.root.state.report_status(self.now)
        connected = summary.child_count
        leaves = summary.leaf_count if connected else 0
        rate = self.meter.count(self.now - interval, self.now) / (interval / 1000.0)
        self.samples.append(Sample(self.now, connected, leaves, rate))
        self.sim.after(interval, self._sample_tick)

    # -- failures ------------------------------------------------------------

    def schedule_failures(self, plan: FailurePlan):
        self.sim.schedule(plan.when, self._apply_plan, plan)

    def _apply_plan(self, plan: FailurePlan) -> set[NodeId]:
        ids = [n.id for n in self.members()]
        failed = inject_failures(ids, self.root_id, plan, self.rng)
        for nid in ids:
            if nid in failed:
                self.fail_node(nid, rejoin=plan.rejoin)
        return failed

    def fail_node(self, nid: NodeId, rejoin: bool = False):
        """Crash ``nid``; its parent re-lends its work and its children rejoin."""
        if nid == self.root_id:
            raise ValueError("the root does not fail")
        node = self.nodes.get(nid)
        if node is None or not node.alive:
            return
        was_attached = node.state.connected
        parent_id = node.state.parent
        node.epoch += 1
        if rejoin:
            self.failed.discard(nid)
        else:
            node.alive = False
            self.failed.add(nid)
            self.candidates.pop(nid, None)
            self._unregister(nid)
        cut_off = node.state.on_parent_failure().closed_children
        node.lender = None
        if was_attached and parent_id is not None:
            self.sim.after(self.config.failure_detection_ms, self._child_lost, parent_id, nid)
        for child in cut_off:
            if child in self.nodes:
                self.sim.after(self.config.failure_detection_ms, self._parent_lost, child, nid)
        if rejoin:
            self.sim.after(self.config.failure_detection_ms, self._rejoin, nid, node.epoch)

    def _child_lost(self, pid: NodeId, cid: NodeId):
        parent = self._attached(pid)
        if parent is None or parent.state.slot_of(cid) is None:
            return
        parent.state.on_child_disconnected(cid)
        if parent.lender is not None:
            parent.lender.on_child_failure(cid)
            if parent.state.is_leaf() and not parent.state.root:
                parent.lender.add_child(LOCAL, limit=1)
            self._dispatch(parent)
        self._propagate(parent)

    def _parent_lost(self, nid: NodeId, failed_parent: NodeId):
        node = self.nodes.get(nid)
        if node is None or not node.alive or node.state.parent != failed_parent:
            return
        node.epoch += 1
        cut_off = node.state.on_parent_failure().closed_children
        node.lender = None
        for child in cut_off:
            if child in self.nodes:
                self.sim.after(self.config.failure_detection_ms, self._parent_lost, child, nid)
        self._rejoin(nid, node.epoch)

    def _rejoin(self, nid: NodeId, epoch: int):
        node = self.nodes.get(nid)
        if node is None or node.epoch != epoch or not node.alive or nid in self.candidates:
            return
        self._become_candidate(nid)

    # -- workload ------------------------------------------------------------

    def _dispatch(self, node: SimNode):
        lender = node.lender
        if lender is None:
            return
        if node.state.root and self._source is not None:
            want = lender.credit() - len(lender.queue)
            for _ in range(max(0, want)):
                try:
                    lender.push(next(self._source))
                except StopIteration:
                    self._source = None
                    break
        for child, seq, value in lender.dispatch():
            if child == LOCAL:
                self.sim.after(self.workload.task.duration_ms, self._compute_done, node.id, node.epoch, seq, value)
            else:
                target = self.nodes[child]
                self.sim.after(self.preset.link_hop_ms, self._on_value, child, target.epoch, node.id, seq, value)

    def _on_value(self, cid: NodeId, epoch: int, pid: NodeId, tag: int, value: Any):
        node = self._attached(cid)
        if node is None or node.epoch != epoch or node.state.parent != pid or node.lender is None:
            return
        node.lender.push(value, tag)
        self._dispatch(node)

    def _compute_done(self, nid: NodeId, epoch: int, seq: int, value: Any):
        node = self.nodes.get(nid)
        if node is None or node.epoch != epoch or node.lender is None:
            return
        result = self.workload.task.fn(value)
        self._emit(node, node.lender.on_result(LOCAL, seq, result))
        self._dispatch(node)

    def _on_result(self, pid: NodeId, epoch: int, cid: NodeId, seq: int, result: Any):
        parent = self._attached(pid)
        if parent is None or parent.epoch != epoch or parent.lender is None:
            return
        self._emit(parent, parent.lender.on_result(cid, seq, result))
        self._dispatch(parent)

    def _emit(self, node: SimNode, emitted: list[tuple[Any, Any]]):
        if not emitted:
            return
        if node.state.root:
            self.outputs.extend(emitted)
            self.meter.record(self.now, len(emitted))
            return
        parent = self.nodes[node.state.parent]
        for tag, result in emitted:
            self.sim.after(self.preset.link_hop_ms, self._on_result, parent.id, parent.epoch, node.id, tag, result)

    # -- running -------------------------------------------------------------

    def run(self, until: Optional[float] = None, stop=None) -> float:
        return self.sim.run(until=until, stop=stop)

    def all_connected(self) -> bool:
        return not self.candidates and len(self.members()) - 1 >= self.expected_members

    def write_trace(self, path: Union[str, Path]):
        if self.trace is None:
            raise RuntimeError("network was created without tracing")
        with open(path, "w") as fh:
            for record in self.trace:
                fh.write(json.dumps(record, separators=(",", ":")) + "\n")
