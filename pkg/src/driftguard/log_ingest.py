"""Apache combined-format parsing, URL decoding, filtering, sessionization.

The parser is strict about the combined-format token structure but tolerant
about content: quoted fields may contain escaped quotes, the request line may
contain stray spaces (they end up in the URL), and common-format lines
without the referrer/user-agent tail are accepted as a degraded mode.
Malformed lines raise :class:`MalformedLine`; stream consumers count and
skip them, they are never fatal.

Parsed records re-serialize byte-for-byte (``LogRecord.to_line``), which is
what makes corpus round-trip checks and deterministic replay possible.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Iterable, Iterator, Optional

DEFAULT_STATIC_EXTENSIONS = (
    ".html", ".htm", ".jpg", ".jpeg", ".png", ".gif",
    ".css", ".js", ".pdf", ".ico",
)

DEFAULT_BOT_SUBSTRINGS = (
    "googlebot", "bingbot", "slurp", "baiduspider", "yandexbot",
    "msnbot", "crawler", "spider", "wget", "curl",
)

# Inactivity window: standard web-analytics convention of 30 minutes.
DEFAULT_SESSION_WINDOW = 1800.0
# Timestamp regressions up to this many seconds are treated as clock skew.
DEFAULT_SKEW_TOLERANCE = 5.0
# Sessions are force-closed past this length to bound memory under flooding.
DEFAULT_MAX_SESSION_LEN = 10_000
DEFAULT_ERROR_STATUS_MIN = 400


class MalformedLine(ValueError):
    """A line that does not match the combined-format token structure."""


_LINE_RE = re.compile(
    r'^(?P<ip>\S+) (?P<ident>\S+) (?P<authuser>\S+) '
    r'\[(?P<time>[^\]]+)\] '
    r'"(?P<request>(?:[^"\\]|\\.)*)" '
    r'(?P<status>\d{3}) (?P<size>\d+|-)'
    r'(?: "(?P<referrer>(?:[^"\\]|\\.)*)" "(?P<agent>(?:[^"\\]|\\.)*)")?$'
)

_MONTHS = {
    "Jan": 1, "Feb": 2, "Mar": 3, "Apr": 4, "May": 5, "Jun": 6,
    "Jul": 7, "Aug": 8, "Sep": 9, "Oct": 10, "Nov": 11, "Dec": 12,
}
_MONTH_NAMES = {v: k for k, v in _MONTHS.items()}

_TIME_RE = re.compile(
    r"^(\d{2})/([A-Z][a-z]{2})/(\d{4}):(\d{2}):(\d{2}):(\d{2}) ([+-]\d{4})$"
)

_HEX_DIGITS = set("0123456789abcdefABCDEF")


def percent_decode(raw: str) -> str:
    """Replace every %hh escape with its byte value, in one pass.

    The scan is left-to-right and never revisits produced characters, so
    double-encoded input stays partially encoded (%252e -> %2e).  Invalid
    escapes ('%g1', a trailing '%') are left verbatim and '+' is a literal.
    Total function: never raises.
    """
    if "%" not in raw:
        return raw
    out = []
    i = 0
    n = len(raw)
    while i < n:
        c = raw[i]
        if c == "%" and i + 2 < n and raw[i + 1] in _HEX_DIGITS and raw[i + 2] in _HEX_DIGITS:
            out.append(chr(int(raw[i + 1 : i + 3], 16)))
            i += 3
        else:
            out.append(c)
            i += 1
    return "".join(out)


def parse_timestamp(text: str) -> float:
    """Parse ``dd/Mon/yyyy:HH:MM:SS zone`` to seconds since the epoch."""
    m = _TIME_RE.match(text)
    if m is None:
        raise MalformedLine(f"bad time field: {text!r}")
    day, mon, year, hh, mm, ss, zone = m.groups()
    month = _MONTHS.get(mon)
    if month is None:
        raise MalformedLine(f"bad month name: {mon!r}")
    sign = -1 if zone[0] == "-" else 1
    offset = timedelta(hours=int(zone[1:3]), minutes=int(zone[3:5])) * sign
    try:
        dt = datetime(
            int(year), month, int(day), int(hh), int(mm), int(ss),
            tzinfo=timezone(offset),
        )
    except ValueError as exc:
        raise MalformedLine(f"bad time field: {text!r} ({exc})") from None
    return dt.timestamp()


def format_timestamp(epoch: float, zone: str) -> str:
    """Inverse of :func:`parse_timestamp` for the given zone string."""
    sign = -1 if zone[0] == "-" else 1
    offset = timedelta(hours=int(zone[1:3]), minutes=int(zone[3:5])) * sign
    dt = datetime.fromtimestamp(epoch, tz=timezone(offset))
    return (
        f"{dt.day:02d}/{_MONTH_NAMES[dt.month]}/{dt.year:04d}:"
        f"{dt.hour:02d}:{dt.minute:02d}:{dt.second:02d} {zone}"
    )


@dataclass(slots=True)
class LogRecord:
    """One parsed access-log line.

    ``request_raw``, ``time_raw`` and the ident/authuser columns preserve
    the original bytes so that :meth:`to_line` reproduces the input exactly.
    ``ground_truth`` is harness-only metadata, absent in production.
    """

    ip: str
    timestamp: float
    time_raw: str
    tz: str
    method: str
    raw_url: str
    protocol: Optional[str]
    request_raw: str
    decoded_url: str
    status: int
    size: Optional[int]
    referrer: Optional[str]
    user_agent: Optional[str]
    ident: str = "-"
    authuser: str = "-"
    combined: bool = True
    ground_truth: Optional[str] = None

    def to_line(self) -> str:
        size = "-" if self.size is None else str(self.size)
        line = (
            f"{self.ip} {self.ident} {self.authuser} [{self.time_raw}] "
            f'"{self.request_raw}" {self.status} {size}'
        )
        if self.combined:
            ref = "-" if self.referrer is None else self.referrer
            agent = "-" if self.user_agent is None else self.user_agent
            line += f' "{ref}" "{agent}"'
        return line


def parse_line(line: str) -> LogRecord:
    """Parse one combined-format line into a :class:`LogRecord`.

    Raises MalformedLine when the token structure does not match; callers
    count and skip.  The URL is percent-decoded exactly once here, so
    ``decoded_url`` is always in sync with ``raw_url``.
    """
    line = line.rstrip("\r\n")
    if not line:
        raise MalformedLine("empty line")
    m = _LINE_RE.match(line)
    if m is None:
        raise MalformedLine(f"not combined format: {line[:120]!r}")
    request = m.group("request")
    parts = request.split(" ")
    if len(parts) < 2 or not parts[0] or not parts[1]:
        raise MalformedLine(f"bad request field: {request!r}")
    method = parts[0]
    if len(parts) >= 3 and parts[-1].startswith("HTTP/"):
        protocol: Optional[str] = parts[-1]
        raw_url = " ".join(parts[1:-1])
    else:
        protocol = None
        raw_url = " ".join(parts[1:])
    status = int(m.group("status"))
    if not 100 <= status <= 599:
        raise MalformedLine(f"status out of range: {status}")
    size_text = m.group("size")
    time_raw = m.group("time")
    referrer = m.group("referrer")
    agent = m.group("agent")
    return LogRecord(
        ip=m.group("ip"),
        timestamp=parse_timestamp(time_raw),
        time_raw=time_raw,
        tz=time_raw[-5:],
        method=method,
        raw_url=raw_url,
        protocol=protocol,
        request_raw=request,
        decoded_url=percent_decode(raw_url),
        status=status,
        size=None if size_text == "-" else int(size_text),
        referrer=None if referrer in (None, "-") else referrer,
        user_agent=None if agent in (None, "-") else agent,
        ident=m.group("ident"),
        authuser=m.group("authuser"),
        combined=m.group("referrer") is not None,
    )


@dataclass
class FilterConfig:
    """Which records are not worth diagnosing: static content and robots."""

    static_extensions: tuple = DEFAULT_STATIC_EXTENSIONS
    bot_substrings: tuple = DEFAULT_BOT_SUBSTRINGS


def filter_record(record: LogRecord, rules: FilterConfig) -> Optional[str]:
    """Return a drop reason ("static" or "bot"), or None to keep the record."""
    path = record.decoded_url.split("?", 1)[0].lower()
    for ext in rules.static_extensions:
        if path.endswith(ext):
            return "static"
    if record.user_agent:
        agent = record.user_agent.lower()
        for bot in rules.bot_substrings:
            if bot in agent:
                return "bot"
    return None


class Session:
    """Running accumulators for one client IP within the inactivity window.

    Holds counts, not records: char counts, errorful-status count and the
    request count are maintained on append, so per-request session features
    are O(1) and memory per open session is bounded regardless of session
    length.
    """

    __slots__ = ("ip", "n_records", "last_activity", "closed",
                 "char_counts", "error_count", "error_status_min")

    def __init__(self, ip: str, error_status_min: int = DEFAULT_ERROR_STATUS_MIN):
        self.ip = ip
        self.n_records = 0
        self.last_activity = 0.0
        self.closed = False
        self.char_counts: Counter = Counter()
        self.error_count = 0
        self.error_status_min = error_status_min

    def __len__(self) -> int:
        return self.n_records

    def append(self, record: LogRecord, effective_ts: float) -> None:
        self.n_records += 1
        self.last_activity = effective_ts
        self.char_counts.update(record.decoded_url.encode("latin-1", "replace"))
        if record.status >= self.error_status_min:
            self.error_count += 1


class SessionStore:
    """Single-writer map of open sessions keyed by client IP.

    One logical stream consumer mutates the store; sharding by IP hash
    across independent stores is the supported parallelization.
    """

    def __init__(
        self,
        window: float = DEFAULT_SESSION_WINDOW,
        skew_tolerance: float = DEFAULT_SKEW_TOLERANCE,
        max_session_len: int = DEFAULT_MAX_SESSION_LEN,
        error_status_min: int = DEFAULT_ERROR_STATUS_MIN,
    ):
        self.window = window
        self.skew_tolerance = skew_tolerance
        self.max_session_len = max_session_len
        self.error_status_min = error_status_min
        self.sessions: dict[str, Session] = {}
        self.closed_count = 0

    def add(self, record: LogRecord) -> tuple[Session, bool]:
        """Route a record to the open session for its IP, or start a new one.

        Returns ``(session, is_new)``.  A gap above the window, a timestamp
        regression beyond the skew tolerance, or an over-long session all
        close the old session and open a fresh one.
        """
        session = self.sessions.get(record.ip)
        ts = record.timestamp
        if session is not None:
            gap = ts - session.last_activity
            if -self.skew_tolerance <= gap <= self.window and len(session) < self.max_session_len:
                # Small regressions are clock skew: treat as simultaneous.
                session.append(record, max(ts, session.last_activity))
                return session, False
            session.closed = True
            self.closed_count += 1
        session = Session(record.ip, self.error_status_min)
        session.append(record, ts)
        self.sessions[record.ip] = session
        return session, True

    def evict_idle(self, now: float) -> int:
        """Drop open sessions idle longer than the window; returns the count."""
        stale = [
            ip for ip, s in self.sessions.items()
            if now - s.last_activity > self.window
        ]
        for ip in stale:
            self.sessions[ip].closed = True
            del self.sessions[ip]
        self.closed_count += len(stale)
        return len(stale)


def sessionize(record: LogRecord, store: SessionStore) -> tuple[Session, bool]:
    """Functional alias for :meth:`SessionStore.add`."""
    return store.add(record)


@dataclass
class ParseStats:
    parsed: int = 0
    malformed: int = 0
    last_error: str = ""


def iter_records(lines: Iterable[str], stats: Optional[ParseStats] = None) -> Iterator[LogRecord]:
    """Parse a line stream, counting and skipping malformed lines."""
    for line in lines:
        if not line.strip():
            continue
        try:
            record = parse_line(line)
        except MalformedLine as exc:
            if stats is not None:
                stats.malformed += 1
                stats.last_error = str(exc)
            continue
        if stats is not None:
            stats.parsed += 1
        yield record
