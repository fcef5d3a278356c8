"""The streaming pipeline: filter, sessionize, diagnose, self-check, adapt.

One engine instance consumes an ordered stream of parsed records and emits
one labeled output per kept record.  All state lives in the session store
and the agents' models; the engine itself only counts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Optional

from .config import RunConfig
from .diagnosers import Acda, train
from .evidence import Decision, INTRUSIVE, NORMAL
from .features import extract_feature
from .fusion_graph import DiagnosisTrace, diagnose_request
from .log_ingest import (
    LogRecord,
    ParseStats,
    SessionStore,
    filter_record,
    iter_records,
)
from .meta_diagnosis import MetaDiagnosisResult, meta_step

log = logging.getLogger("driftguard")

# Idle-session sweep cadence, in kept records.
EVICT_EVERY = 1024


@dataclass
class EngineOutput:
    """One kept request's verdict and the evidence behind it."""

    ordinal: int
    record: LogRecord
    decision: Decision
    trace: DiagnosisTrace
    meta: MetaDiagnosisResult


@dataclass
class EngineStats:
    seen: int = 0
    kept: int = 0
    filtered_static: int = 0
    filtered_bot: int = 0
    flagged: int = 0
    uncertain: int = 0
    adaptations: int = 0


class DetectionEngine:
    """Applies the configured graph and constraints to a record stream."""

    def __init__(
        self,
        config: RunConfig,
        agents: Mapping[str, Acda],
        event_sink: Optional[Callable[[dict], None]] = None,
    ):
        missing = set(config.graph.cdas.values()) - set(agents)
        if missing:
            raise ValueError(f"agents missing for leaves: {sorted(missing)}")
        for agent in agents.values():
            agent.adapt_enabled = config.adapt_enabled
            agent.adapt_cap = config.adapt_cap
        self.config = config
        self.agents = dict(agents)
        self.event_sink = event_sink
        self.store = SessionStore(
            window=config.window,
            skew_tolerance=config.skew_tolerance,
            max_session_len=config.max_session_len,
            error_status_min=config.error_status_min,
        )
        self.stats = EngineStats()

    def process_record(self, record: LogRecord) -> Optional[EngineOutput]:
        """Diagnose one record; None when filtering dropped it."""
        stats = self.stats
        stats.seen += 1
        reason = filter_record(record, self.config.filter_rules)
        if reason == "static":
            stats.filtered_static += 1
            return None
        if reason == "bot":
            stats.filtered_bot += 1
            return None
        session, _ = self.store.add(record)
        stats.kept += 1
        ordinal = stats.kept
        trace = diagnose_request(self.config.graph, self.agents, record, session)
        meta = meta_step(
            self.config.graph,
            trace,
            self.config.constraints,
            self.agents,
            ordinal=ordinal,
            timestamp=record.timestamp,
            event_sink=self.event_sink,
        )
        decision = trace.verdict
        if meta.uncertain:
            decision = Decision(decision.label, decision.belief, uncertain=True)
            stats.uncertain += 1
        if decision.label == INTRUSIVE:
            stats.flagged += 1
        stats.adaptations += len(meta.adapted_agents)
        if ordinal % EVICT_EVERY == 0:
            self.store.evict_idle(record.timestamp)
        return EngineOutput(ordinal, record, decision, trace, meta)

    def process_lines(self, lines: Iterable[str],
                      parse_stats: Optional[ParseStats] = None) -> Iterator[EngineOutput]:
        for record in iter_records(lines, parse_stats):
            output = self.process_record(record)
            if output is not None:
                yield output


def collect_features(records: Iterable[LogRecord], config: RunConfig) -> dict:
    """Replay labeled records through sessionization and pull every feature.

    Returns ``{feature_kind: {label: [value, ...]}}``.  Count features are
    copied out of the live session accumulators so later appends cannot
    mutate collected values.
    """
    store = SessionStore(
        window=config.window,
        skew_tolerance=config.skew_tolerance,
        max_session_len=config.max_session_len,
        error_status_min=config.error_status_min,
    )
    kinds = set(config.leaf_features.values())
    collected: dict = {kind: {NORMAL: [], INTRUSIVE: []} for kind in kinds}
    for record in records:
        if record.ground_truth not in (NORMAL, INTRUSIVE):
            raise ValueError(f"unlabeled training record: {record.to_line()!r}")
        if filter_record(record, config.filter_rules) is not None:
            continue
        session, _ = store.add(record)
        for kind in kinds:
            value = extract_feature(kind, record, session)
            if not isinstance(value, float):
                value = dict(value)
            collected[kind][record.ground_truth].append(value)
    return collected


def train_agents(records: Iterable[LogRecord], config: RunConfig) -> dict[str, Acda]:
    """Fit one agent per graph leaf from labeled records."""
    collected = collect_features(records, config)
    agents = {}
    for node, kind in config.leaf_features.items():
        model = train(
            collected[kind][NORMAL],
            collected[kind][INTRUSIVE],
            kind,
            sigma_min=config.sigma_min,
        )
        agents[node] = Acda(
            agent_id=node,
            model=model,
            adapt_enabled=config.adapt_enabled,
            adapt_cap=config.adapt_cap,
        )
        log.info("trained %s (%s): precision=%.4f", node, kind, model.precision)
    return agents
