"""Run configuration: graph topology, constraints, filtering, adaptation.

Configs are JSON.  Every section has a complete default, so an empty file
(or no file) runs the stock two-view graph.  Unknown keys are rejected
rather than ignored; silently dropped options are how replay runs stop
matching live ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from . import features
from .diagnosers import DEFAULT_ADAPT_CAP, DEFAULT_SIGMA_MIN
from .fusion_graph import FusionGraph
from .log_ingest import (
    DEFAULT_BOT_SUBSTRINGS,
    DEFAULT_ERROR_STATUS_MIN,
    DEFAULT_MAX_SESSION_LEN,
    DEFAULT_SESSION_WINDOW,
    DEFAULT_SKEW_TOLERANCE,
    DEFAULT_STATIC_EXTENSIONS,
    FilterConfig,
)
from .meta_diagnosis import IntegrityConstraint

SCHEMA_VERSION = 1
FUSION_OPERATOR = "dempster-shafer"
DEFAULT_BATCH_SIZE = 10_000


class ConfigError(ValueError):
    """A config file that cannot be used as given."""


DEFAULT_CONFIG: dict = {
    "schema_version": SCHEMA_VERSION,
    "graph": {
        "operator": FUSION_OPERATOR,
        "root": "root",
        "leaves": {
            "request_char": features.REQUEST_CHAR,
            "request_token": features.REQUEST_TOKEN,
            "session_char": features.SESSION_CHAR,
            "session_error": features.SESSION_ERROR_RATIO,
        },
        "views": {
            "request_view": ["request_char", "request_token"],
            "session_view": ["session_char", "session_error"],
            "root": ["request_view", "session_view"],
        },
    },
    "constraints": [
        {
            "id": "request_agreement",
            "scope": ["root", "request_view"],
            "contestable": ["request_view"],
        },
        {
            "id": "session_agreement",
            "scope": ["root", "session_view"],
            "contestable": ["session_view"],
        },
    ],
    "session": {
        "window": DEFAULT_SESSION_WINDOW,
        "skew_tolerance": DEFAULT_SKEW_TOLERANCE,
        "max_session_len": DEFAULT_MAX_SESSION_LEN,
        "error_status_min": DEFAULT_ERROR_STATUS_MIN,
    },
    "filter": {
        "static_extensions": list(DEFAULT_STATIC_EXTENSIONS),
        "bot_substrings": list(DEFAULT_BOT_SUBSTRINGS),
    },
    "adaptation": {
        "enabled": True,
        "cap": DEFAULT_ADAPT_CAP,
        "sigma_min": DEFAULT_SIGMA_MIN,
    },
    "metrics": {
        "batch_size": DEFAULT_BATCH_SIZE,
    },
}


@dataclass
class RunConfig:
    """Validated, materialized settings for one engine run."""

    graph: FusionGraph
    leaf_features: dict
    constraints: list
    filter_rules: FilterConfig
    window: float
    skew_tolerance: float
    max_session_len: int
    error_status_min: int
    adapt_enabled: bool
    adapt_cap: int
    sigma_min: float
    batch_size: int
    raw: dict = field(default_factory=dict, repr=False)


def _merged(overrides: Optional[Mapping]) -> dict:
    """Defaults with one level of per-section override."""
    merged = {k: (dict(v) if isinstance(v, dict) else list(v) if isinstance(v, list) else v)
              for k, v in DEFAULT_CONFIG.items()}
    if not overrides:
        return merged
    unknown = set(overrides) - set(DEFAULT_CONFIG)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    for key, value in overrides.items():
        base = merged[key]
        if isinstance(base, dict):
            if not isinstance(value, Mapping):
                raise ConfigError(f"section {key!r} must be an object")
            bad = set(value) - set(base)
            # Graph subsections are free-form; everything else is closed.
            if key != "graph" and bad:
                raise ConfigError(f"unknown keys in {key!r}: {sorted(bad)}")
            base.update(value)
        else:
            merged[key] = value
    return merged


def build_graph(section: Mapping) -> tuple[FusionGraph, dict]:
    """Materialize the topology section; returns (graph, leaf -> feature kind)."""
    operator = section.get("operator", FUSION_OPERATOR)
    if operator != FUSION_OPERATOR:
        raise ConfigError(f"unsupported fusion operator: {operator!r}")
    leaves = section.get("leaves")
    views = section.get("views")
    root = section.get("root")
    if not isinstance(leaves, Mapping) or not leaves:
        raise ConfigError("graph.leaves must be a non-empty object")
    if not isinstance(views, Mapping):
        raise ConfigError("graph.views must be an object")
    if not isinstance(root, str):
        raise ConfigError("graph.root must be a node name")
    leaf_features = {}
    for node, kind in leaves.items():
        if kind not in features.FEATURE_KINDS:
            raise ConfigError(f"leaf {node!r}: unknown feature {kind!r}")
        leaf_features[node] = kind
    graph = FusionGraph(
        root=root,
        cdas={node: node for node in leaf_features},
        vdas={node: tuple(children) for node, children in views.items()},
    )
    try:
        graph.validate(agent_ids=leaf_features.keys())
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return graph, leaf_features


def build_constraints(entries, graph: FusionGraph) -> list:
    constraints = []
    seen = set()
    for entry in entries:
        try:
            constraint = IntegrityConstraint(
                constraint_id=entry["id"],
                scope=tuple(entry["scope"]),
                mdcs=tuple(entry["contestable"]),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad constraint entry {entry!r}: {exc}") from None
        if constraint.constraint_id in seen:
            raise ConfigError(f"duplicate constraint id {constraint.constraint_id!r}")
        seen.add(constraint.constraint_id)
        try:
            constraint.validate(graph)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        constraints.append(constraint)
    return constraints


def from_dict(overrides: Optional[Mapping] = None) -> RunConfig:
    merged = _merged(overrides)
    version = merged.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version: {version!r}")
    graph, leaf_features = build_graph(merged["graph"])
    constraints = build_constraints(merged["constraints"], graph)
    session = merged["session"]
    adaptation = merged["adaptation"]
    metrics = merged["metrics"]
    filter_section = merged["filter"]
    window = float(session["window"])
    skew = float(session["skew_tolerance"])
    max_len = int(session["max_session_len"])
    error_min = int(session["error_status_min"])
    if window <= 0 or skew < 0 or max_len < 1:
        raise ConfigError("session limits must be positive")
    if not 100 <= error_min <= 599:
        raise ConfigError(f"error_status_min out of range: {error_min}")
    cap = int(adaptation["cap"])
    if cap < 1:
        raise ConfigError(f"adaptation cap must be >= 1, got {cap}")
    batch_size = int(metrics["batch_size"])
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    return RunConfig(
        graph=graph,
        leaf_features=leaf_features,
        constraints=constraints,
        filter_rules=FilterConfig(
            static_extensions=tuple(filter_section["static_extensions"]),
            bot_substrings=tuple(s.lower() for s in filter_section["bot_substrings"]),
        ),
        window=window,
        skew_tolerance=skew,
        max_session_len=max_len,
        error_status_min=error_min,
        adapt_enabled=bool(adaptation["enabled"]),
        adapt_cap=cap,
        sigma_min=float(adaptation["sigma_min"]),
        batch_size=batch_size,
        raw=merged,
    )


def load_config(path: Optional[str] = None) -> RunConfig:
    """Read a JSON config file; None or a missing-keys file means defaults."""
    if path is None:
        return from_dict(None)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path!r} must hold a JSON object")
    return from_dict(data)
