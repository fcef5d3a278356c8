"""Shared fixtures and builders for the test suite."""

from __future__ import annotations

import pytest

from driftguard.config import from_dict
from driftguard.engine import train_agents
from driftguard.eval_harness import clone_agents, generate_bootstrap, labeled_records
from driftguard.log_ingest import Session, parse_line

# Two real-world traversal probes against a classic CGI endpoint, logged in
# the degraded referrer-less format of older servers.  They double as
# byte-exact round-trip fixtures and as attack-shaped parser input.
TRAVERSAL_PROBE_LINES = (
    '192.168.0.1 - - [12/Apr/2006:08:05:43 -0300] '
    '"GET /cgi-bin/mrtg.cgi?cfg=/../../../../../../winnt/win.ini HTTP/1.0" 404 289',
    '192.168.0.2 - - [12/Apr/2006:08:05:43 -0300] '
    '"GET /cgi-bin/mrtg.cgi?cfg=/../../../../../../etc/passwd HTTP/1.0" 404 289',
)

# A two-request flow whose feature values are small enough to count by hand:
# a parameterless hit that 404s, retried with a user parameter and served.
RETRY_SESSION_REQUESTS = (
    ("/scripts/access.pl", 404),
    ("/scripts/access.pl?user=johndoe", 200),
)

BASE_TIME = "12/Apr/2006:08:05:43 -0300"


def build_line(
    ip: str = "10.0.0.1",
    time: str = BASE_TIME,
    method: str = "GET",
    url: str = "/index.pl",
    protocol: str = "HTTP/1.1",
    status: int = 200,
    size=512,
    referrer=None,
    agent=None,
    combined: bool = True,
) -> str:
    """One syntactically valid log line with every knob overridable."""
    size_text = "-" if size is None else str(size)
    request = f"{method} {url} {protocol}" if protocol else f"{method} {url}"
    line = f'{ip} - - [{time}] "{request}" {status} {size_text}'
    if combined:
        line += f' "{referrer or "-"}" "{agent or "-"}"'
    return line


def session_of(requests, ip: str = "10.0.0.9") -> Session:
    """A session holding the given (url, status) requests, 10 s apart."""
    session = Session(ip)
    for index, (url, status) in enumerate(requests):
        record = parse_line(build_line(ip=ip, url=url, status=status))
        session.append(record, record.timestamp + 10.0 * index)
    return session


@pytest.fixture(scope="session")
def default_config():
    return from_dict(None)


@pytest.fixture(scope="session")
def base_agents(default_config):
    """One small trained agent set for the whole run; never mutated directly."""
    lines, labels = generate_bootstrap(seed=11, n_normal=700, n_attack_sessions=10)
    return train_agents(labeled_records(zip(lines, labels)), default_config)


@pytest.fixture
def agents(base_agents):
    """Per-test deep copies of the shared agents, safe to adapt."""
    return clone_agents(base_agents)
