"""The four monitored traffic features.

Two request-level features are extracted from the decoded URL of the current
request (its character distribution and its token distribution), and two
session-level features summarize the whole session prefix up to and including
the current request (the errorful-status ratio and the summed character
distribution of all URLs).

All distributions carry *raw occurrence counts*, not length-normalized
frequencies; length sensitivity is absorbed downstream by the distance
models and is a documented limitation of the count representation.
"""

from __future__ import annotations

import re
from collections import Counter
from typing import NamedTuple

REQUEST_CHAR = "request-char"
REQUEST_TOKEN = "request-token"
SESSION_CHAR = "session-char"
SESSION_ERROR_RATIO = "session-error-ratio"

FEATURE_KINDS = (REQUEST_CHAR, REQUEST_TOKEN, SESSION_CHAR, SESSION_ERROR_RATIO)

# Tokens are the URL fragments between path, query, and assignment separators.
_TOKEN_SPLIT = re.compile(r"[/?&=]+")


class ErrorRatio(NamedTuple):
    """Fraction of a session's requests that drew an errorful status."""

    ratio: float
    n: int


def char_distribution(url: str) -> Counter:
    """Count byte occurrences in a decoded URL.

    Keys are byte values 0-255.  Characters above U+00FF (which can only
    enter through the raw log text, never through percent decoding) are
    counted as b"?" so that one character always contributes exactly one
    count and the total equals the URL length.
    """
    return Counter(url.encode("latin-1", "replace"))


def tokenize(url: str) -> Counter:
    """Split a decoded URL on '/', '?', '&', '=' and count the fragments.

    Empty fragments (leading slash, doubled separators) are discarded, so
    no zero-count keys are ever stored.
    """
    return Counter(t for t in _TOKEN_SPLIT.split(url) if t)


def error_ratio(session) -> ErrorRatio:
    """Errorful-status ratio over the session prefix seen so far.

    Which statuses count as errorful is fixed when the session is created
    (>= 400 by default); the session keeps a running count so this is O(1).
    """
    n = len(session)
    if n == 0:
        raise ValueError("error_ratio requires a session with at least one record")
    return ErrorRatio(session.error_count / n, n)


def session_char_distribution(session) -> Counter:
    """Element-wise sum of char_distribution over every URL in the session.

    Returns the session's live accumulator; callers must not mutate it.
    """
    if len(session) == 0:
        raise ValueError("session_char_distribution requires a non-empty session")
    return session.char_counts


def extract_feature(kind: str, record, session):
    """Dispatch a feature kind to its extractor for the current request.

    Session features are computed over the prefix ending at ``record``,
    which must already have been appended to ``session``.
    """
    if kind == REQUEST_CHAR:
        return char_distribution(record.decoded_url)
    if kind == REQUEST_TOKEN:
        return tokenize(record.decoded_url)
    if kind == SESSION_CHAR:
        return session_char_distribution(session)
    if kind == SESSION_ERROR_RATIO:
        return error_ratio(session).ratio
    raise ValueError(f"unknown feature kind: {kind!r}")
