"""Bootstrap-latency and throughput ramp-up experiments on the simulated overlay."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Optional

from genet.simnet.network import OverlayNetwork, Sample, SimConfig, Workload
from genet.streammap import Task

TIMELINE_COLUMNS = ["t_ms", "connected_count", "leaf_count", "results_per_s"]

# how close output throughput must get to the leaf count to count as "full"
FULL_THROUGHPUT_TOLERANCE = 0.10


@dataclass
class TimelineResult:
    scenario: str
    total_nodes: int
    seed: int
    samples: list[Sample] = field(default_factory=list)
    full_connect_latency_ms: Optional[float] = None
    full_throughput_latency_ms: Optional[float] = None
    tree_depth: int = 0
    leaf_count: int = 0
    steady_throughput: Optional[float] = None
    last_join_ms: float = 0.0
    trace: Optional[list[dict]] = None

    def summary(self) -> dict:
        return {
            "scenario": self.scenario,
            "total_nodes": self.total_nodes,
            "seed": self.seed,
            "full_connect_latency_ms": self.full_connect_latency_ms,
            "full_throughput_latency_ms": self.full_throughput_latency_ms,
            "tree_depth": self.tree_depth,
            "leaf_count": self.leaf_count,
            "steady_throughput": self.steady_throughput,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TIMELINE_COLUMNS)
        for s in self.samples:
            writer.writerow([f"{s.t_ms:.0f}", s.connected_count, s.leaf_count, f"{s.results_per_s:.3f}"])
        return buf.getvalue()


def _config(scenario: str, seed: int, config: Optional[SimConfig]) -> SimConfig:
    base = config or SimConfig()
    return replace(base, scenario=scenario, seed=seed)


def _first_full_connect(samples: list[Sample], total: int) -> Optional[float]:
    for s in samples:
        if s.connected_count >= total:
            return s.t_ms
    return None


def _first_full_throughput(samples: list[Sample], total: int) -> Optional[float]:
    for s in samples:
        if (
            s.connected_count >= total
            and s.leaf_count > 0
            and s.results_per_s >= (1 - FULL_THROUGHPUT_TOLERANCE) * s.leaf_count
        ):
            return s.t_ms
    return None


def run_bootstrap_experiment(
    scenario: str,
    total_nodes: int,
    join_rate: float,
    seed: int = 0,
    config: Optional[SimConfig] = None,
    trace: bool = False,
    max_ms: float = 3_600_000.0,
) -> TimelineResult:
    """Join ``total_nodes`` candidates at ``join_rate`` per second and time full connection.

    The latency is read off the root's status samples, taken every report
    interval, so it is an upper bound on when the last node connected.
    """
    if join_rate <= 0:
        raise ValueError("join_rate must be positive")
    cfg = _config(scenario, seed, config)
    net = OverlayNetwork(cfg, trace=trace)
    net.schedule_joins(total_nodes, join_rate)

    def done():
        return bool(net.samples) and net.samples[-1].connected_count >= total_nodes

    net.run(until=max_ms, stop=done)
    result = TimelineResult(scenario, total_nodes, seed, list(net.samples))
    result.full_connect_latency_ms = _first_full_connect(net.samples, total_nodes)
    result.tree_depth = net.tree_depth()
    result.leaf_count = net.leaf_count()
    result.last_join_ms = cfg.startup_delay_ms + (total_nodes - 1) * 1000.0 / join_rate
    result.trace = net.trace
    return result


def run_throughput_experiment(
    scenario: str,
    total_nodes: int,
    task: Task = Task(),
    seed: int = 0,
    config: Optional[SimConfig] = None,
    join_rate: Optional[float] = None,
    steady_window_ms: float = 30_000.0,
    settle_ms: float = 9_000.0,
    max_ms: float = 3_600_000.0,
) -> TimelineResult:
    """Bootstrap with the reference workload running and measure output throughput.

    Joins arrive over 10 s unless ``join_rate`` is given. After the tree is
    fully connected the run continues ``settle_ms`` for the pipeline to fill,
    then measures the steady throughput over ``steady_window_ms``.
    """
    cfg = _config(scenario, seed, config)
    rate = join_rate if join_rate is not None else max(total_nodes / 10.0, 0.1)
    net = OverlayNetwork(cfg, workload=Workload(task))
    net.schedule_joins(total_nodes, rate)

    def connected():
        return bool(net.samples) and net.samples[-1].connected_count >= total_nodes

    net.run(until=max_ms, stop=connected)
    result = TimelineResult(scenario, total_nodes, seed)
    result.last_join_ms = cfg.startup_delay_ms + (total_nodes - 1) * 1000.0 / rate
    if connected():
        t_full = net.now
        start = t_full + settle_ms
        net.run(until=start + steady_window_ms)
        result.steady_throughput = net.meter.throughput(start, start + steady_window_ms)
    result.samples = list(net.samples)
    result.full_connect_latency_ms = _first_full_connect(net.samples, total_nodes)
    result.full_throughput_latency_ms = _first_full_throughput(net.samples, total_nodes)
    result.tree_depth = net.tree_depth()
    result.leaf_count = net.leaf_count()
    return result
