"""Synthetic corpora, attack injection, and the adaptive-vs-frozen protocol.

The harness answers one question: does self-adaptation lower the false
positive burden on drifting-but-benign traffic without giving up attack
detection?  It fabricates a benign corpus whose vocabulary has drifted
relative to the bootstrap corpus, splices in scripted attack sessions,
replays the stream through two engines (one adapting, one frozen), and
scores both in fixed-size batches.

Everything is driven by explicit integer seeds; two calls with the same
arguments produce byte-identical corpora, streams, and metrics.
"""

from __future__ import annotations

import csv
import hashlib
import heapq
import json
import logging
import math
import random
import tempfile
import time
from collections import Counter
from contextlib import ExitStack
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Optional, Sequence

import numpy as np

from .config import RunConfig, from_dict
from .diagnosers import Acda, load_snapshot, snapshot, snapshot_digest
from .engine import DetectionEngine, train_agents
from .evidence import INTRUSIVE, NORMAL
from .log_ingest import LogRecord, format_timestamp, parse_line, parse_timestamp

log = logging.getLogger("driftguard")

_ZONE = "-0300"
_FALLBACK_TIME = "12/Apr/2006:08:00:00 -0300"
_BASE_EPOCH = parse_timestamp(_FALLBACK_TIME)

# Benign client pool lives in 198.18/15 (benchmark range); injected attack
# sessions get fresh 10.200/16 addresses so the two can never share a session.
_ATTACK_AGENT = "Mozilla/4.0 (compatible; MSIE 6.0; Windows NT 5.1)"

_BROWSER_AGENTS = (
    "Mozilla/5.0 (Windows NT 5.1; rv:1.8.0.1) Gecko/20060111 Firefox/1.5.0.1",
    "Mozilla/4.0 (compatible; MSIE 6.0; Windows NT 5.1; SV1)",
    "Mozilla/5.0 (Macintosh; U; PPC Mac OS X; en) AppleWebKit/418 Safari/417.9.2",
    "Opera/8.54 (Windows NT 5.1; U; en)",
)

_REFERRERS = (
    "-",
    "-",
    "http://www.example.com/index.php",
    "http://www.example.com/news.php?page=1",
)

_WORDS = (
    "report", "status", "summary", "printers", "budget", "minutes",
    "roadmap", "agenda", "invoice", "backlog", "intranet", "archive",
)
_USERS = (
    "johndoe", "asmith", "mlopez", "kchen", "tnguyen", "rpatel",
    "bwilson", "efoster",
)

# Established application vocabulary; the bootstrap corpus samples only
# this.  The legacy stack tracks visitors with a sid query parameter, so
# nearly every request shares that token; it is what anchors core traffic
# to the learned normal profile.
# Entries repeat to weight popular pages; the monitoring CGI is linked from
# one admin page and is deliberately rare.
_CORE_APPS = (
    ("/site/index.php", ("page={d}",)),
    ("/site/index.php", ("page={d}",)),
    ("/site/news.php", ("page={d}", "id={n}")),
    ("/site/news.php", ("page={d}", "id={n}")),
    ("/site/article.php", ("id={n}", "page={d}")),
    ("/site/article.php", ("id={n}", "page={d}")),
    ("/site/search.php", ("q={w}", "page={d}")),
    ("/site/search.php", ("q={w}", "page={d}")),
    ("/site/login.php", ("user={u}",)),
    ("/site/profile.php", ("user={u}", "tab={w}")),
    ("/site/thread.php", ("id={n}", "page={d}")),
    ("/site/reply.php", ("id={n}", "user={u}")),
    ("/site/cart.php", ("item={n}", "qty={d}")),
    ("/site/access.php", ("user={u}", "page={d}")),
    ("/cgi-bin/mrtg.cgi", ("cfg=server{d}.cfg",)),
)

# Link rot lives in the CMS; the admin-linked monitoring CGI stays live.
_STALE_APPS = tuple(a for a in _CORE_APPS if a[0].startswith("/site/"))

# Post-upgrade vocabulary: the new v2 stack.  Terse endpoint names, dashed
# compound values, a format selector instead of the old named params, and
# no visitor sid (state moved into cookies; only the locale param
# survived the upgrade).  Deliberately uniform in shape so the new
# vocabulary reads as one coherent dialect, not six unrelated ones.
_EXTENDED_APPS = (
    ("/v2/rpt.php", ("r=0{d}-0{d}-2006", "f=csv")),
    ("/v2/qry.php", ("k=px-{n}-{d}", "f=tab")),
    ("/v2/feed.php", ("t=nw-{n}-{d}", "f=rss")),
    ("/v2/cal.php", ("m=2006-0{d}-{d}", "f=grid")),
    ("/v2/gal.php", ("a=tr-06-0{d}", "f=wide")),
    ("/v2/poll.php", ("s={n}-{d}", "f=bar")),
)

_ERROR_STATUSES = (404, 404, 404, 404, 403, 500)
_OK_STATUSES = (200, 200, 200, 200, 200, 200, 200, 200, 200, 304)


class EmptyPool(ValueError):
    """An attack pool that is required but has no templates."""


class AttackTemplate(NamedTuple):
    method: str
    url: str
    status: int


def load_attack_pool(name: str) -> list[AttackTemplate]:
    """Load a bundled template pool: ``known`` or ``novel``."""
    if name not in ("known", "novel"):
        raise ValueError(f"no such pool: {name!r}")
    text = (resources.files(__package__) / "data" / f"{name}_attacks.txt").read_text()
    pool = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"bad template line: {raw!r}")
        method, url, status_text = parts
        status = int(status_text)
        if not 100 <= status <= 599:
            raise ValueError(f"template status out of range: {raw!r}")
        pool.append(AttackTemplate(method, url, status))
    if not pool:
        raise EmptyPool(f"pool {name!r} is empty")
    return pool


@dataclass
class TrafficProfile:
    """Knobs of the benign-traffic grammar.

    ``extended_fraction`` is the drift dial: the probability that a session
    speaks the post-upgrade vocabulary.  The bootstrap corpus is generated
    with it forced to zero.  ``stale_rate`` sessions are dead-link chasers;
    each draws its own error rate from ``stale_error_rate`` plus or minus
    ``stale_error_spread``, and ``stale_dead_rate`` of them chase a fully
    rotted section and see nothing but errors after landing.  Benign error
    ratios therefore span the whole attack range instead of clustering,
    which keeps the error-ratio diagnoser honestly imperfect and its benign
    profile wide.
    """

    session_len_min: int = 3
    session_len_max: int = 9
    session_gap_mean: float = 0.25
    think_min: float = 1.0
    think_max: float = 20.0
    error_rate: float = 0.045
    stale_rate: float = 0.35
    stale_error_rate: float = 0.5
    stale_error_spread: float = 0.25
    stale_dead_rate: float = 0.5
    extended_fraction: float = 0.30
    param_drop_rate: float = 0.05


def _fill(rng: random.Random, pattern: str) -> str:
    out = pattern
    while True:
        if "{d}" in out:
            out = out.replace("{d}", str(rng.randrange(1, 10)), 1)
        elif "{n}" in out:
            out = out.replace("{n}", str(rng.randrange(100, 1000)), 1)
        elif "{w}" in out:
            out = out.replace("{w}", rng.choice(_WORDS), 1)
        elif "{u}" in out:
            out = out.replace("{u}", rng.choice(_USERS), 1)
        else:
            return out


def _benign_url(rng: random.Random, apps, drop_rate: float,
                sid: Optional[int]) -> str:
    path, patterns = rng.choice(apps)
    params = [_fill(rng, p) for p in patterns if rng.random() >= drop_rate]
    # Both stacks stamp the locale on every generated link; the legacy one
    # additionally stamps skin, nav origin and visitor id.
    params.append("lang=en")
    if sid is not None:
        params.append("ui=classic")
        params.append("ref=nav")
        params.append(f"sid={sid}")
    return path + "?" + "&".join(params)


def generate_synthetic_clean(n: int, seed: int,
                             profile: Optional[TrafficProfile] = None) -> Iterator[str]:
    """Yield n benign combined-format lines from overlapping simulated sessions.

    Timestamps are nondecreasing.  Every line parses; the generator builds
    the exact grammar the parser accepts.  Lines are produced lazily through
    a reorder buffer bounded by session overlap, so corpus size never bounds
    memory.
    """
    profile = profile or TrafficProfile()
    rng = random.Random(seed)
    heap: list[tuple[int, int, str]] = []
    start = _BASE_EPOCH
    seq = 0
    emitted = 0
    while seq < n:
        start += rng.expovariate(1.0 / profile.session_gap_mean)
        ip = f"198.18.{rng.randrange(256)}.{rng.randrange(1, 255)}"
        drifted = rng.random() < profile.extended_fraction
        # Link rot lives in the old CMS; fresh post-upgrade endpoints do not
        # 404, so only non-drifted sessions can be dead-link chasers.
        stale = (not drifted) and rng.random() < profile.stale_rate
        if drifted:
            apps = _EXTENDED_APPS
        elif stale:
            apps = _STALE_APPS
        else:
            apps = _CORE_APPS
        sid = None if drifted else rng.randrange(1000, 10000)
        agent = rng.choice(_BROWSER_AGENTS)
        referrer = rng.choice(_REFERRERS)
        if stale and rng.random() < profile.stale_dead_rate:
            error_rate = 1.0
        elif stale:
            error_rate = min(1.0, max(0.0, rng.uniform(
                profile.stale_error_rate - profile.stale_error_spread,
                profile.stale_error_rate + profile.stale_error_spread)))
        else:
            error_rate = profile.error_rate
        t = start
        for hit in range(rng.randint(profile.session_len_min, profile.session_len_max)):
            url = _benign_url(rng, apps, profile.param_drop_rate, sid)
            # Dead-link chasers land on a live page first, then follow rot.
            if hit > 0 and rng.random() < error_rate:
                status = rng.choice(_ERROR_STATUSES)
            else:
                status = rng.choice(_OK_STATUSES)
            size = "-" if status == 304 else str(rng.randrange(180, 9000))
            stamp = format_timestamp(int(t), _ZONE)
            line = (
                f'{ip} - - [{stamp}] "GET {url} HTTP/1.1" {status} {size} '
                f'"{referrer}" "{agent}"'
            )
            heapq.heappush(heap, (int(t), seq, line))
            seq += 1
            t += rng.uniform(profile.think_min, profile.think_max)
        # Every later session starts at or after the current start, so
        # anything queued up to that second can no longer be preempted.
        floor = int(start)
        while heap and heap[0][0] <= floor:
            if emitted == n:
                return
            yield heapq.heappop(heap)[2]
            emitted += 1
    while heap and emitted < n:
        yield heapq.heappop(heap)[2]
        emitted += 1


def _poisson(rng: random.Random, lam: float) -> int:
    limit = math.exp(-lam)
    k = 0
    p = 1.0
    while p > limit:
        k += 1
        p *= rng.random()
    return k - 1


@dataclass
class InjectionPlan:
    """How many attack sessions to splice in, and from which pools."""

    n_sessions: int
    reqs_per_session: float
    known_pool: Sequence[AttackTemplate]
    novel_pool: Sequence[AttackTemplate]
    novel_fraction: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_sessions < 0:
            raise ValueError("n_sessions must be >= 0")
        if not 0.0 <= self.novel_fraction <= 1.0:
            raise ValueError("novel_fraction must be in [0, 1]")
        if self.reqs_per_session <= 0:
            raise ValueError("reqs_per_session must be positive")
        known = {(t.method, t.url) for t in self.known_pool}
        novel = {(t.method, t.url) for t in self.novel_pool}
        if known & novel:
            raise ValueError(f"pools overlap: {sorted(known & novel)[:3]}")
        if self.n_sessions > 0:
            if self.novel_fraction < 1.0 and not self.known_pool:
                raise EmptyPool("known pool required but empty")
            if self.novel_fraction > 0.0 and not self.novel_pool:
                raise EmptyPool("novel pool required but empty")


def _bracket_time(line: str) -> str:
    try:
        return line.split("[", 1)[1].split("]", 1)[0]
    except IndexError:
        return _FALLBACK_TIME


def _attack_session(rng: random.Random, plan: InjectionPlan,
                    ip: str, stamp: str) -> list[str]:
    length = max(1, _poisson(rng, plan.reqs_per_session))
    lines = []
    for _ in range(length):
        use_novel = plan.novel_pool and rng.random() < plan.novel_fraction
        template = rng.choice(plan.novel_pool if use_novel else plan.known_pool)
        size = rng.randrange(200, 1200)
        lines.append(
            f'{ip} - - [{stamp}] "{template.method} {template.url} HTTP/1.0" '
            f'{template.status} {size} "-" "{_ATTACK_AGENT}"'
        )
    return lines


def inject(clean: Iterable[str], plan: InjectionPlan,
           n_clean: Optional[int] = None) -> Iterator[tuple[str, str]]:
    """Splice attack sessions into a benign line stream.

    Yields ``(line, truth_label)`` pairs lazily.  Clean lines pass through
    unchanged and in order.  Each attack session lands as a contiguous block
    at a seeded-random position, stamped with the time of the record it
    lands after, so stream order still respects timestamps.

    ``n_clean`` is the clean-stream length, which fixes the position domain;
    when omitted, the stream is materialized to measure it.

    Draw order (fixed for reproducibility): all block positions first, then
    each block's contents in position order.
    """
    if n_clean is None:
        clean = list(clean)
        n_clean = len(clean)
    if plan.n_sessions == 0:
        for line in clean:
            yield line, NORMAL
        return
    rng = random.Random(plan.rng_seed)
    positions = sorted(
        rng.randrange(n_clean + 1) for _ in range(plan.n_sessions)
    )

    def block(index: int, stamp: str) -> Iterator[tuple[str, str]]:
        ip = f"10.200.{index // 250}.{index % 250 + 1}"
        for attack_line in _attack_session(rng, plan, ip, stamp):
            yield attack_line, INTRUSIVE

    pending = iter(positions)
    next_position = next(pending, None)
    block_index = 0
    previous: Optional[str] = None
    cursor = 0
    for line in clean:
        while next_position == cursor:
            # A block at position 0 borrows the first line's stamp.
            anchor = previous if previous is not None else line
            yield from block(block_index, _bracket_time(anchor))
            block_index += 1
            next_position = next(pending, None)
        yield line, NORMAL
        previous = line
        cursor += 1
    while next_position is not None:
        stamp = _bracket_time(previous) if previous is not None else _FALLBACK_TIME
        yield from block(block_index, stamp)
        block_index += 1
        next_position = next(pending, None)


def generate_bootstrap(
    seed: int,
    profile: Optional[TrafficProfile] = None,
    n_normal: int = 4500,
    n_attack_sessions: int = 50,
    attack_pool: Optional[Sequence[AttackTemplate]] = None,
    reqs_per_session: float = 20.0,
) -> tuple[list[str], list[str]]:
    """Labeled training corpus: pre-drift benign traffic plus known attacks.

    The benign half is the clean generator with the drift dial at zero.
    Attack sessions are appended after the benign span; training never
    depends on interleaving.
    """
    profile = replace(profile or TrafficProfile(), extended_fraction=0.0)
    benign = list(generate_synthetic_clean(n_normal, seed, profile))
    pool = list(attack_pool) if attack_pool is not None else load_attack_pool("known")
    plan = InjectionPlan(
        n_sessions=n_attack_sessions,
        reqs_per_session=reqs_per_session,
        known_pool=pool,
        novel_pool=(),
        novel_fraction=0.0,
        rng_seed=seed + 1,
    )
    rng = random.Random(plan.rng_seed)
    stamp = _bracket_time(benign[-1]) if benign else _FALLBACK_TIME
    lines = list(benign)
    labels = [NORMAL] * len(benign)
    for index in range(n_attack_sessions):
        ip = f"10.100.{index // 250}.{index % 250 + 1}"
        block = _attack_session(rng, plan, ip, stamp)
        lines.extend(block)
        labels.extend([INTRUSIVE] * len(block))
    return lines, labels


def labeled_records(pairs: Iterable[tuple[str, str]]) -> Iterator[LogRecord]:
    """Parse (line, truth_label) pairs lazily into labeled records."""
    for line, label in pairs:
        record = parse_line(line)
        record.ground_truth = label
        yield record


def classify(decision_label: str, truth: str) -> str:
    """Confusion-matrix cell for one diagnosed record: tp, fp, fn or tn."""
    if truth == INTRUSIVE:
        return "tp" if decision_label == INTRUSIVE else "fn"
    return "fp" if decision_label == INTRUSIVE else "tn"


@dataclass
class BatchMetrics:
    batch_index: int
    fp: int
    fn: int
    tp: int
    tn: int
    dr: float
    fpr: float
    precision: float
    f_measure: float

    @property
    def size(self) -> int:
        return self.fp + self.fn + self.tp + self.tn


def batch_metrics(batch_index: int, fp: int, fn: int, tp: int, tn: int) -> BatchMetrics:
    """Detection rate, false-positive rate and F-measure from raw counts.

    Degenerate denominators yield 0 rather than an error: a batch with no
    intrusions has no meaningful detection rate, and reporting 0 keeps the
    CSV rectangular.
    """
    total = fp + fn + tp + tn
    if total <= 0:
        raise ValueError("empty batch")
    dr = tp / (tp + fn) if tp + fn else 0.0
    fpr = fp / total
    precision = tp / (tp + fp) if tp + fp else 0.0
    f_measure = 2.0 * dr * precision / (dr + precision) if dr + precision else 0.0
    return BatchMetrics(batch_index, fp, fn, tp, tn, dr, fpr, precision, f_measure)


@dataclass
class AdaptationStats:
    """Adaptation volume and how often the reference label was right."""

    total: int = 0
    per_agent: dict = field(default_factory=dict)
    events: int = 0
    events_correct: int = 0

    @property
    def accuracy(self) -> Optional[float]:
        if self.events == 0:
            return None
        return self.events_correct / self.events


@dataclass
class ExperimentResult:
    batches: list
    adaptation: AdaptationStats
    totals: BatchMetrics
    kept: int
    wall_seconds: float
    events: list

    @property
    def records_per_second(self) -> float:
        if self.wall_seconds <= 0:
            return float("inf")
        return self.kept / self.wall_seconds


def run_experiment(records: Iterable[LogRecord], config: RunConfig,
                   agents: dict[str, Acda], adapt: bool,
                   batch_size: Optional[int] = None) -> ExperimentResult:
    """Stream labeled records through one engine and score fixed batches.

    Mutates ``agents`` when ``adapt`` is true; callers wanting to compare
    modes must hand each run its own clones (:func:`clone_agents`).
    """
    run_config = replace(config, adapt_enabled=adapt)
    batch_size = batch_size or config.batch_size
    events: list[dict] = []
    truth_holder = [None]

    def sink(event: dict) -> None:
        events.append({**event, "truth": truth_holder[0]})

    engine = DetectionEngine(run_config, agents, event_sink=sink)
    batches: list[BatchMetrics] = []
    counts = Counter()
    in_batch = 0
    kept = 0
    started = time.perf_counter()
    for record in records:
        truth = record.ground_truth
        if truth not in (NORMAL, INTRUSIVE):
            raise ValueError("experiment records need ground truth labels")
        truth_holder[0] = truth
        output = engine.process_record(record)
        if output is None:
            continue
        counts[classify(output.decision.label, truth)] += 1
        in_batch += 1
        kept += 1
        if in_batch == batch_size:
            batches.append(batch_metrics(
                len(batches), counts["fp"], counts["fn"], counts["tp"], counts["tn"],
            ))
            counts.clear()
            in_batch = 0
    if in_batch:
        batches.append(batch_metrics(
            len(batches), counts["fp"], counts["fn"], counts["tp"], counts["tn"],
        ))
    wall = time.perf_counter() - started
    stats = AdaptationStats()
    for event in events:
        if not event["adapted"]:
            continue
        stats.events += 1
        stats.total += len(event["adapted"])
        if event["reference"] == event["truth"]:
            stats.events_correct += 1
        for agent_id in event["adapted"]:
            stats.per_agent[agent_id] = stats.per_agent.get(agent_id, 0) + 1
    totals = batch_metrics(
        -1,
        sum(b.fp for b in batches),
        sum(b.fn for b in batches),
        sum(b.tp for b in batches),
        sum(b.tn for b in batches),
    ) if batches else batch_metrics(-1, 0, 0, 0, 1)
    return ExperimentResult(
        batches=batches,
        adaptation=stats,
        totals=totals,
        kept=kept,
        wall_seconds=wall,
        events=events,
    )


def clone_agents(agents: dict[str, Acda]) -> dict[str, Acda]:
    """Independent copies via a snapshot round-trip."""
    return {
        agent_id: load_snapshot(snapshot(agent), agent_id,
                                adapt_enabled=agent.adapt_enabled,
                                adapt_cap=agent.adapt_cap)
        for agent_id, agent in agents.items()
    }


def agents_digest(agents: dict[str, Acda]) -> str:
    """One hash over every agent's snapshot; detects any model change."""
    return snapshot_digest({aid: snapshot(a) for aid, a in sorted(agents.items())})


def fp_quartile_means(batches: Sequence[BatchMetrics]) -> tuple[float, float]:
    """Mean false positives over the first and last quarter of batches.

    A trailing short batch is excluded: its FP count is not comparable
    with full-size batches.
    """
    if not batches:
        return 0.0, 0.0
    full = [b for b in batches if b.size == batches[0].size]
    if not full:
        full = list(batches)
    q = max(1, len(full) // 4)
    fps = np.array([b.fp for b in full], dtype=float)
    return float(fps[:q].mean()), float(fps[-q:].mean())


def stream_digest(lines: Iterable[str]) -> str:
    h = hashlib.sha256()
    for line in lines:
        h.update(line.encode("latin-1", "replace"))
        h.update(b"\n")
    return h.hexdigest()


def write_labeled_stream(pairs: Iterable[tuple[str, str]],
                         corpus_path, labels_path) -> tuple[str, int, int]:
    """Spill a labeled line stream to a corpus file and a truth sidecar.

    Returns ``(stream_sha256, total_lines, intrusive_lines)``.  The digest
    covers the corpus lines only, newline-delimited, and equals
    :func:`stream_digest` of the same lines.
    """
    h = hashlib.sha256()
    total = 0
    intrusive = 0
    with open(corpus_path, "w", encoding="latin-1") as corpus_fh, \
            open(labels_path, "w", encoding="ascii") as labels_fh:
        for line, label in pairs:
            corpus_fh.write(line)
            corpus_fh.write("\n")
            labels_fh.write(label)
            labels_fh.write("\n")
            h.update(line.encode("latin-1", "replace"))
            h.update(b"\n")
            total += 1
            if label == INTRUSIVE:
                intrusive += 1
    return h.hexdigest(), total, intrusive


def read_labeled_stream(corpus_path, labels_path) -> Iterator[tuple[str, str]]:
    """Replay a corpus file and its truth sidecar as (line, label) pairs."""
    with open(corpus_path, encoding="latin-1") as corpus_fh, \
            open(labels_path, encoding="ascii") as labels_fh:
        for line, label in zip(corpus_fh, labels_fh):
            yield line.rstrip("\n"), label.strip()


def write_metrics_csv(path, batches: Sequence[BatchMetrics]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["batch", "fp", "fn", "tp", "tn", "dr", "fpr", "f_measure"])
        for b in batches:
            writer.writerow([
                b.batch_index, b.fp, b.fn, b.tp, b.tn,
                f"{b.dr:.6f}", f"{b.fpr:.6f}", f"{b.f_measure:.6f}",
            ])


def write_events_jsonl(path, events: Sequence[dict]) -> None:
    with open(path, "w") as fh:
        for event in events:
            fh.write(json.dumps(event, sort_keys=True))
            fh.write("\n")


def _mode_summary(result: ExperimentResult) -> dict:
    first_q, last_q = fp_quartile_means(result.batches)
    stats = result.adaptation
    return {
        "batches": len(result.batches),
        "fp": result.totals.fp,
        "fn": result.totals.fn,
        "tp": result.totals.tp,
        "tn": result.totals.tn,
        "dr": result.totals.dr,
        "fpr": result.totals.fpr,
        "f_measure": result.totals.f_measure,
        "fp_first_quartile_mean": first_q,
        "fp_last_quartile_mean": last_q,
        "adaptations": stats.total,
        "adaptation_events": stats.events,
        "adaptation_accuracy": stats.accuracy,
        "adaptations_per_agent": dict(sorted(stats.per_agent.items())),
        "records_per_second": round(result.records_per_second, 1),
        "wall_seconds": round(result.wall_seconds, 3),
    }


def run_drift_experiment(
    out_dir=None,
    seed: int = 7,
    n_clean: int = 100_000,
    n_attack_sessions: int = 40,
    reqs_per_session: float = 20.0,
    novel_fraction: float = 0.5,
    config: Optional[RunConfig] = None,
    profile: Optional[TrafficProfile] = None,
    bootstrap_normal: int = 4500,
    bootstrap_attack_sessions: int = 50,
) -> dict:
    """The full protocol: bootstrap, train, inject, run both modes, compare.

    The injected stream is spilled to disk and replayed from there for each
    mode, so memory stays bounded by session overlap rather than corpus
    size.  Returns the summary dict; when ``out_dir`` is given the corpus
    (``corpus.log`` plus ``corpus_labels.txt``), ``adaptive_metrics.csv``,
    ``frozen_metrics.csv``, ``events.jsonl`` and ``summary.json`` land
    there; otherwise the corpus lives in a temporary directory for the
    duration of the run.
    """
    config = config or from_dict(None)
    profile = profile or TrafficProfile()
    known = load_attack_pool("known")
    novel = load_attack_pool("novel")

    boot_lines, boot_labels = generate_bootstrap(
        seed + 1, profile, n_normal=bootstrap_normal,
        n_attack_sessions=bootstrap_attack_sessions, attack_pool=known,
    )
    base_agents = train_agents(labeled_records(zip(boot_lines, boot_labels)), config)
    plan = InjectionPlan(
        n_sessions=n_attack_sessions,
        reqs_per_session=reqs_per_session,
        known_pool=known,
        novel_pool=novel,
        novel_fraction=novel_fraction,
        rng_seed=seed + 2,
    )

    with ExitStack() as stack:
        if out_dir is not None:
            work = Path(out_dir)
            work.mkdir(parents=True, exist_ok=True)
        else:
            work = Path(stack.enter_context(
                tempfile.TemporaryDirectory(prefix="driftguard-eval-")))
        corpus_path = work / "corpus.log"
        labels_path = work / "corpus_labels.txt"
        pairs = inject(
            generate_synthetic_clean(n_clean, seed, profile), plan, n_clean=n_clean,
        )
        digest, total, injected = write_labeled_stream(pairs, corpus_path, labels_path)
        log.info("stream ready: %d records (%d injected), sha256 %s",
                 total, injected, digest[:12])

        results = {}
        mode_digests = {}
        for mode, adapt in (("adaptive", True), ("frozen", False)):
            agents = clone_agents(base_agents)
            before = agents_digest(agents)
            result = run_experiment(
                labeled_records(read_labeled_stream(corpus_path, labels_path)),
                config, agents, adapt=adapt,
            )
            after = agents_digest(agents)
            results[mode] = result
            mode_digests[mode] = {"models_before": before, "models_after": after}
            log.info("%s: fp=%d fn=%d tp=%d tn=%d (%.0f rec/s)",
                     mode, result.totals.fp, result.totals.fn,
                     result.totals.tp, result.totals.tn, result.records_per_second)

    adaptive = results["adaptive"]
    frozen = results["frozen"]
    frozen_unchanged = (
        mode_digests["frozen"]["models_before"] == mode_digests["frozen"]["models_after"]
    )
    adaptive_summary = _mode_summary(adaptive)
    frozen_summary = _mode_summary(frozen)
    summary = {
        "seed": seed,
        "records": total,
        "injected_records": injected,
        "attack_sessions": n_attack_sessions,
        "novel_fraction": novel_fraction,
        "stream_sha256": digest,
        "modes": {"adaptive": adaptive_summary, "frozen": frozen_summary},
        "frozen_models_unchanged": frozen_unchanged,
        "checks": {
            "adaptive_fp_below_frozen": adaptive.totals.fp < frozen.totals.fp,
            "adaptive_fp_declines": (
                adaptive_summary["fp_last_quartile_mean"]
                < adaptive_summary["fp_first_quartile_mean"]
            ),
            "adaptation_accuracy_ok": (
                adaptive.adaptation.accuracy is not None
                and adaptive.adaptation.accuracy >= 0.95
            ),
            "frozen_models_unchanged": frozen_unchanged,
        },
    }
    if out_dir is not None:
        out = Path(out_dir)
        write_metrics_csv(out / "adaptive_metrics.csv", adaptive.batches)
        write_metrics_csv(out / "frozen_metrics.csv", frozen.batches)
        write_events_jsonl(out / "events.jsonl", adaptive.events)
        with open(out / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return summary
