"""Command-line driver: train models, stream diagnoses, run the evaluation.

Exit codes are a stable contract: 0 success, 1 runtime failure, 2 bad
configuration or unmet precondition (missing corpus, missing snapshots,
malformed config).  Set DRIFTGUARD_LOG_LEVEL=DEBUG|INFO|... for
diagnostics on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from itertools import chain
from pathlib import Path
from typing import Iterable, Optional, TextIO

from .config import ConfigError, RunConfig, load_config
from .diagnosers import (
    Acda,
    EmptyTrainingSet,
    SnapshotError,
    load_snapshot,
    snapshot,
)
from .engine import DetectionEngine, train_agents
from .eval_harness import EmptyPool, run_drift_experiment
from .evidence import INTRUSIVE, NORMAL
from .log_ingest import ParseStats, iter_records
from .meta_diagnosis import UnknownNode

log = logging.getLogger("driftguard")

_PRECONDITION_ERRORS = (
    ConfigError, EmptyTrainingSet, SnapshotError, EmptyPool,
    UnknownNode, FileNotFoundError,
)


def _setup_logging() -> None:
    level_name = os.environ.get("DRIFTGUARD_LOG_LEVEL", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        stream=sys.stderr,
        level=level,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _parse_args(argv) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="driftguard",
        description="Self-adaptive anomaly detection for web access logs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fit per-feature models from labeled corpora")
    p_train.add_argument("--config", metavar="PATH", help="JSON run configuration")
    p_train.add_argument("--normal", metavar="PATH", help="benign training log")
    p_train.add_argument("--intrusive", metavar="PATH", help="attack training log")
    p_train.add_argument("--out", metavar="DIR", default="models",
                         help="snapshot output directory (default: models)")

    p_run = sub.add_parser("run", help="diagnose a log stream with trained models")
    p_run.add_argument("--config", metavar="PATH")
    p_run.add_argument("--input", metavar="PATH|-", default="-",
                       help="access log to read, or - for stdin (default)")
    p_run.add_argument("--models", metavar="DIR", default="models",
                       help="snapshot directory (default: models)")
    p_run.add_argument("--out", metavar="DIR",
                       help="write decisions and events here instead of stdout")
    p_run.add_argument("--no-adapt", action="store_true",
                       help="freeze models: diagnose without adaptation")
    p_run.add_argument("--csv", action="store_true",
                       help="decision stream as CSV instead of JSON lines")

    p_eval = sub.add_parser("eval", help="run the adaptive-vs-frozen drift experiment")
    p_eval.add_argument("--config", metavar="PATH")
    p_eval.add_argument("--out", metavar="DIR", default="eval_out")
    p_eval.add_argument("--seed", metavar="N", type=int, default=7)
    return parser.parse_args(argv)


def _read_labeled(path: str, label: str, stats: ParseStats):
    with open(path) as fh:
        lines = fh.readlines()
    for record in iter_records(lines, stats):
        record.ground_truth = label
        yield record


def cmd_train(args) -> int:
    config = load_config(args.config)
    if not args.normal or not args.intrusive:
        raise EmptyTrainingSet("train needs both --normal and --intrusive corpora")
    stats = ParseStats()
    records = chain(
        _read_labeled(args.normal, NORMAL, stats),
        _read_labeled(args.intrusive, INTRUSIVE, stats),
    )
    agents = train_agents(records, config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for agent_id in sorted(agents):
        agent = agents[agent_id]
        path = out_dir / f"{agent_id}.json"
        with open(path, "w") as fh:
            json.dump(snapshot(agent), fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"{agent_id}: feature={agent.model.feature_kind} "
              f"precision={agent.model.precision:.4f} -> {path}")
    if stats.malformed:
        print(f"skipped {stats.malformed} malformed lines "
              f"(last: {stats.last_error})", file=sys.stderr)
    return 0


def _load_agents(models_dir: str, config: RunConfig) -> dict[str, Acda]:
    agents = {}
    for agent_id in sorted(set(config.graph.cdas.values())):
        path = Path(models_dir) / f"{agent_id}.json"
        if not path.exists():
            raise SnapshotError(f"missing snapshot: {path}")
        with open(path) as fh:
            payload = json.load(fh)
        agents[agent_id] = load_snapshot(
            payload, agent_id,
            adapt_enabled=config.adapt_enabled,
            adapt_cap=config.adapt_cap,
        )
    return agents


def _persist_agents(agents: dict[str, Acda], models_dir: str) -> None:
    for agent_id, agent in agents.items():
        path = Path(models_dir) / f"{agent_id}.json"
        tmp = path.with_suffix(".json.tmp")
        with open(tmp, "w") as fh:
            json.dump(snapshot(agent), fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)


class _DecisionWriter:
    """Serializes one decision per kept request, as JSONL or CSV."""

    def __init__(self, fh: TextIO, as_csv: bool):
        self.fh = fh
        self.as_csv = as_csv
        if as_csv:
            fh.write("ordinal,ip,label,belief,uncertain\n")

    def write(self, output) -> None:
        d = output.decision
        if self.as_csv:
            self.fh.write(
                f"{output.ordinal},{output.record.ip},{d.label},"
                f"{d.belief:.6f},{str(d.uncertain).lower()}\n"
            )
        else:
            self.fh.write(json.dumps({
                "ordinal": output.ordinal,
                "ip": output.record.ip,
                "label": d.label,
                "belief": d.belief,
                "uncertain": d.uncertain,
            }))
            self.fh.write("\n")


def _run_stream(engine: DetectionEngine, lines: Iterable[str],
                writer: _DecisionWriter, parse_stats: ParseStats) -> bool:
    """Drive the engine over a line stream; returns False on interrupt.

    Each record finishes its full diagnose-check-adapt step before the
    next starts, so an interrupt here leaves models consistent with every
    decision already written.
    """
    try:
        for output in engine.process_lines(lines, parse_stats):
            writer.write(output)
    except KeyboardInterrupt:
        log.warning("interrupted after %d kept records", engine.stats.kept)
        return False
    return True


def cmd_run(args) -> int:
    config = load_config(args.config)
    if args.no_adapt:
        config = replace(config, adapt_enabled=False)
    agents = _load_agents(args.models, config)

    events_fh = None
    decisions_fh = None
    try:
        if args.out:
            out_dir = Path(args.out)
            out_dir.mkdir(parents=True, exist_ok=True)
            suffix = "csv" if args.csv else "jsonl"
            decisions_fh = open(out_dir / f"decisions.{suffix}", "w")
            events_fh = open(out_dir / "events.jsonl", "w")
            decisions_out: TextIO = decisions_fh
        else:
            decisions_out = sys.stdout

        def sink(event: dict) -> None:
            if events_fh is not None:
                events_fh.write(json.dumps(event, sort_keys=True))
                events_fh.write("\n")

        engine = DetectionEngine(config, agents, event_sink=sink)
        writer = _DecisionWriter(decisions_out, args.csv)
        parse_stats = ParseStats()
        if args.input == "-":
            _run_stream(engine, sys.stdin, writer, parse_stats)
        else:
            with open(args.input) as fh:
                _run_stream(engine, fh, writer, parse_stats)
    finally:
        # Models persist even on interrupt; decisions already written are
        # exactly the records the snapshots have absorbed.
        _persist_agents(agents, args.models)
        if decisions_fh is not None:
            decisions_fh.close()
        if events_fh is not None:
            events_fh.close()

    s = engine.stats
    log.info(
        "seen=%d kept=%d flagged=%d uncertain=%d adaptations=%d malformed=%d",
        s.seen, s.kept, s.flagged, s.uncertain, s.adaptations,
        parse_stats.malformed,
    )
    return 0


def cmd_eval(args) -> int:
    config = load_config(args.config)
    summary = run_drift_experiment(out_dir=args.out, seed=args.seed, config=config)
    json.dump(summary, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def main(argv=None) -> int:
    args = _parse_args(argv)
    _setup_logging()
    commands = {"train": cmd_train, "run": cmd_run, "eval": cmd_eval}
    try:
        return commands[args.command](args)
    except _PRECONDITION_ERRORS as exc:
        print(f"driftguard {args.command}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"driftguard {args.command}: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1


if __name__ == "__main__":
    sys.exit(main())
