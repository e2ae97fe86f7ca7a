"""``genet`` command line: run the simulated experiments and write CSV/JSON.

CSV columns
-----------
depth        trial, n, failure, children_limit, balanced_depth, extra_fraction,
             deeper2_count, max_depth, disconnected
             (balanced_depth = ceil(log_children_limit(n)), root included in n;
             extra_fraction = share of nodes deeper than balanced_depth;
             deeper2_count = nodes at balanced_depth + 2 or deeper)
bootstrap,   t_ms, connected_count, leaf_count, results_per_s
throughput   (one row per root status sample)

A JSON summary is printed on stdout for every command.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from genet.identity import DEFAULT_CHILDREN_LIMIT, HASHES
from genet.simnet.network import OverlayNetwork, SimConfig, Workload
from genet.simnet.failures import FailurePlan
from genet.simnet.presets import PRESETS
from genet.streammap import Task

log = logging.getLogger("genet")


def _common(parser: argparse.ArgumentParser, defaults: bool):
    # global flags are accepted before or after the subcommand
    # unset values fall back to the config file, then to SimConfig defaults
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    parser.add_argument("--children-limit", type=int, default=d(None), help="child slots per node (default 10)")
    parser.add_argument("--timeout-ms", type=float, default=d(None), help="candidate timeout (default 60000)")
    parser.add_argument("--report-ms", type=float, default=d(None), help="status report interval (default 3000)")
    parser.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="genet",
        description="Simulated experiments for the Genet fat-tree overlay.",
        epilog="CSV columns" + __doc__.split("CSV columns", 1)[1],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    _common(parser, defaults=True)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _common(common, defaults=False)

    p = sub.add_parser("depth", parents=[common], help="depth census of sequentially built trees")
    p.add_argument("--n", type=int, required=True, help="tree size, root included")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--failure", type=float, default=0.0, help="failure probability F")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rejoin-order", choices=["random", "join"], default="random")
    p.add_argument("--hash", choices=sorted(HASHES), default="fnv1a-mix")
    p.add_argument("--engine", choices=["fast", "protocol"], default="fast")
    p.add_argument("--out", type=Path, help="per-trial CSV")

    for name, help_ in (
        ("bootstrap", "time until all joining nodes are connected"),
        ("throughput", "throughput ramp-up with the reference task"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--scenario", choices=sorted(PRESETS), default="lan")
        p.add_argument("--nodes", type=int, required=True, help="joining nodes (root excluded)")
        p.add_argument("--rate", type=float, help="joins per second (default nodes/10)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", type=Path, help="JSON simulation config")
        p.add_argument("--out", type=Path, help="timeline CSV")
        if name == "bootstrap":
            p.add_argument("--trace", type=Path, help="newline-delimited JSON trace of control messages")
        else:
            p.add_argument("--task-ms", type=float, default=1000.0)

    p = sub.add_parser("stream", parents=[common], help="square a stream of numbers on a simulated tree")
    p.add_argument("--nodes", type=int, default=10)
    p.add_argument("--scenario", choices=sorted(PRESETS), default="lan")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--task-ms", type=float, default=1000.0)
    p.add_argument("--failure", type=float, default=0.0, help="fail nodes with this probability mid-run")
    p.add_argument("--input", type=Path, help="NDJSON input values (default stdin)")
    p.add_argument("--output", type=Path, help="NDJSON results (default stdout)")
    return parser


def _sim_config(args) -> SimConfig:
    if getattr(args, "config", None):
        cfg = SimConfig.load(args.config)
    else:
        cfg = SimConfig(scenario=args.scenario, seed=args.seed)
    overrides = {
        "children_limit": args.children_limit,
        "timeout_ms": args.timeout_ms,
        "report_interval_ms": args.report_ms,
    }
    return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})


def _write(path: Optional[Path], text: str):
    if path is None:
        return
    path.write_text(text)
    log.info("wrote %s", path)


def cmd_depth(args) -> dict:
    from genet.experiments.depth import run_depth_experiment

    result = run_depth_experiment(
        args.n, args.trials, args.failure, args.seed,
        children_limit=args.children_limit or DEFAULT_CHILDREN_LIMIT, hash_name=args.hash,
        rejoin_order=args.rejoin_order, engine=args.engine,
    )
    _write(args.out, result.to_csv())
    return result.summary()


def cmd_bootstrap(args) -> dict:
    from genet.experiments.timeline import run_bootstrap_experiment

    cfg = _sim_config(args)
    rate = args.rate or max(args.nodes / 10.0, 0.1)
    result = run_bootstrap_experiment(cfg.scenario, args.nodes, rate, cfg.seed, config=cfg, trace=bool(args.trace))
    _write(args.out, result.to_csv())
    if args.trace:
        with open(args.trace, "w") as fh:
            for record in result.trace:
                fh.write(json.dumps(record, separators=(",", ":")) + "\n")
    return result.summary()


def cmd_throughput(args) -> dict:
    from genet.experiments.timeline import run_throughput_experiment

    cfg = _sim_config(args)
    result = run_throughput_experiment(
        cfg.scenario, args.nodes, Task(args.task_ms), cfg.seed, config=cfg, join_rate=args.rate,
    )
    _write(args.out, result.to_csv())
    return result.summary()


def cmd_stream(args) -> dict:
    src = args.input.open() if args.input else sys.stdin
    with src:
        values = [json.loads(line) for line in src if line.strip()]
    cfg = _sim_config(args)
    net = OverlayNetwork(cfg, workload=Workload(Task(args.task_ms), source=values))
    net.schedule_joins(args.nodes, max(args.nodes / 10.0, 0.1))
    if args.failure > 0:
        net.run(stop=net.all_connected)
        plan = FailurePlan(args.failure, when=net.now + args.task_ms / 2, rejoin=True)
        net.schedule_failures(plan)
    net.run(until=net.now + 86_400_000.0, stop=lambda: len(net.outputs) >= len(values))
    lines = "".join(json.dumps(result) + "\n" for _, result in net.outputs)
    if args.output:
        args.output.write_text(lines)
    else:
        sys.stdout.write(lines)
    return {"inputs": len(values), "outputs": len(net.outputs), "sim_time_ms": net.now}


COMMANDS = {
    "depth": cmd_depth,
    "bootstrap": cmd_bootstrap,
    "throughput": cmd_throughput,
    "stream": cmd_stream,
}


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    summary = COMMANDS[args.command](args)
    out = sys.stderr if args.command == "stream" and not args.output else sys.stdout
    print(json.dumps(summary, indent=2), file=out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
