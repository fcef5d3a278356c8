"""Feature extraction: char counts, tokens, error ratio, session rollup."""

from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import RETRY_SESSION_REQUESTS, build_line, session_of
from driftguard.features import (
    FEATURE_KINDS,
    REQUEST_CHAR,
    REQUEST_TOKEN,
    SESSION_CHAR,
    SESSION_ERROR_RATIO,
    char_distribution,
    error_ratio,
    extract_feature,
    session_char_distribution,
    tokenize,
)
from driftguard.log_ingest import Session, parse_line

RETRY_URL = "/scripts/access.pl?user=johndoe"

# URL characters that survive the quoted request field unescaped.
url_texts = st.text(alphabet="abcdez123/?&=.%-_", max_size=50)


class TestCharDistribution:
    def test_hand_counted_retry_url(self):
        counts = char_distribution(RETRY_URL)
        assert counts[ord("a")] == 1
        assert counts[ord("b")] == 0
        assert counts[ord("c")] == 3
        assert counts[ord("d")] == 1
        assert counts[ord("e")] == 3

    def test_small_example(self):
        assert char_distribution("aab") == {97: 2, 98: 1}

    def test_empty_url(self):
        assert char_distribution("") == {}

    def test_high_codepoint_collapses_to_one_byte(self):
        counts = char_distribution("a€b")
        assert counts.total() == 3
        assert counts[ord("?")] == 1

    @given(st.text(alphabet=st.characters(max_codepoint=0x2FF), max_size=60))
    def test_total_count_equals_url_length(self, url):
        assert char_distribution(url).total() == len(url)

    @given(url_texts, url_texts)
    def test_concatenation_adds_counts(self, a, b):
        assert char_distribution(a + b) == char_distribution(a) + char_distribution(b)


class TestTokenize:
    def test_retry_url_tokens(self):
        assert tokenize(RETRY_URL) == {
            "scripts": 1,
            "access.pl": 1,
            "user": 1,
            "johndoe": 1,
        }

    def test_root_url_has_no_tokens(self):
        assert tokenize("/") == {}

    def test_repeated_token_counted(self):
        assert tokenize("/a/b?c=d&c=e") == {"a": 1, "b": 1, "c": 2, "d": 1, "e": 1}

    def test_runs_of_separators_yield_nothing(self):
        assert tokenize("//a//?&=b") == {"a": 1, "b": 1}

    @given(st.text(alphabet="abc.%-_123", min_size=1, max_size=30))
    def test_separator_free_text_is_one_token(self, text):
        assert tokenize(text) == {text: 1}

    @given(url_texts)
    def test_no_zero_or_empty_keys(self, url):
        tokens = tokenize(url)
        assert "" not in tokens
        assert all(count > 0 for count in tokens.values())


class TestErrorRatio:
    def test_retry_session_is_half(self):
        session = session_of(RETRY_SESSION_REQUESTS)
        assert error_ratio(session) == (0.5, 2)

    def test_all_served(self):
        session = session_of([("/a.pl", 200), ("/b.pl", 304)])
        assert error_ratio(session).ratio == 0.0

    def test_three_quarters(self):
        session = session_of(
            [("/a.pl", 404), ("/b.pl", 500), ("/c.pl", 403), ("/d.pl", 200)]
        )
        assert error_ratio(session).ratio == 0.75

    def test_empty_session_rejected(self):
        with pytest.raises(ValueError):
            error_ratio(Session("10.0.0.9"))

    def test_custom_error_threshold(self):
        session = Session("10.0.0.9", error_status_min=500)
        record = parse_line(build_line(status=404))
        session.append(record, record.timestamp)
        assert error_ratio(session).ratio == 0.0

    @given(st.permutations([200, 404, 200, 500, 403, 304]))
    def test_order_does_not_matter(self, statuses):
        session = session_of([(f"/r{i}.pl", s) for i, s in enumerate(statuses)])
        assert error_ratio(session).ratio == 0.5


class TestSessionCharDistribution:
    def test_retry_session_hand_counts(self):
        counts = session_char_distribution(session_of(RETRY_SESSION_REQUESTS))
        assert counts[ord("a")] == 2
        assert counts[ord("b")] == 0
        assert counts[ord("c")] == 6
        assert counts[ord("d")] == 1
        assert counts[ord("e")] == 4

    def test_single_request_equals_request_distribution(self):
        session = session_of([(RETRY_URL, 200)])
        assert session_char_distribution(session) == char_distribution(RETRY_URL)

    def test_empty_session_rejected(self):
        with pytest.raises(ValueError):
            session_char_distribution(Session("10.0.0.9"))

    @given(st.lists(st.text(alphabet="abcde/?&=.", min_size=1, max_size=20),
                    min_size=1, max_size=6))
    def test_additive_over_requests(self, urls):
        session = Session("10.0.0.9")
        expected = char_distribution("")
        for i, url in enumerate(urls):
            record = parse_line(build_line(url=url))
            session.append(record, record.timestamp + float(i))
            expected += char_distribution(record.decoded_url)
        assert session_char_distribution(session) == expected


class TestExtractFeature:
    def build(self, url, status=200):
        record = parse_line(build_line(url=url, status=status))
        session = Session(record.ip)
        session.append(record, record.timestamp)
        return record, session

    def test_kind_list_is_exactly_the_four(self):
        assert FEATURE_KINDS == (
            REQUEST_CHAR, REQUEST_TOKEN, SESSION_CHAR, SESSION_ERROR_RATIO,
        )

    def test_dispatch_matches_direct_calls(self):
        record, session = self.build(RETRY_URL, status=404)
        assert extract_feature(REQUEST_CHAR, record, session) == char_distribution(
            record.decoded_url
        )
        assert extract_feature(REQUEST_TOKEN, record, session) == tokenize(
            record.decoded_url
        )
        assert extract_feature(SESSION_CHAR, record, session) == (
            session_char_distribution(session)
        )
        assert extract_feature(SESSION_ERROR_RATIO, record, session) == 1.0

    def test_request_features_use_decoded_url(self):
        record, session = self.build("/a%20b")
        assert extract_feature(REQUEST_CHAR, record, session)[ord(" ")] == 1

    def test_unknown_kind_rejected(self):
        record, session = self.build("/x.pl")
        with pytest.raises(ValueError):
            extract_feature("request-bigram", record, session)
