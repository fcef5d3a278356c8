"""The combination graph: leaf diagnosers fused bottom-up into one verdict.

Leaves are agent-backed nodes, inner nodes (views) fuse their children's
mass triples, and the single root carries the global diagnosis.  The graph
is a rooted DAG: sharing a child between views is legal, cycles and
agent-backed inner nodes are not.

Evaluation is pure: given the leaf diagnoses it returns every node's fused
triple without touching the agents, which is what the consistency-check
layer relies on to re-derive reference decisions from subsets of nodes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .evidence import (
    Decision,
    Diagnosis,
    TotalConflict,
    VACUOUS,
    combine_all,
    decide,
)
from .features import extract_feature

log = logging.getLogger("driftguard")


class GraphError(ValueError):
    """Structural problem in a combination graph definition."""


class CycleDetected(GraphError):
    pass


class LeafIsVda(GraphError):
    """An inner node with no children; fusion over nothing is undefined."""


class DanglingAgent(GraphError):
    """A leaf references an agent id that no agent provides."""


@dataclass
class FusionGraph:
    """Topology only: node names, which are leaves, who fuses whom."""

    root: str
    cdas: dict[str, str]          # leaf node -> agent id
    vdas: dict[str, tuple]        # inner node -> child node names

    def validate(self, agent_ids, allow_orphans: bool = False) -> None:
        """Check rooted-DAG shape and agent wiring; raises GraphError."""
        overlap = set(self.cdas) & set(self.vdas)
        if overlap:
            raise GraphError(f"nodes both leaf and inner: {sorted(overlap)}")
        if self.root not in self.vdas and self.root not in self.cdas:
            raise GraphError(f"root {self.root!r} is not a node")
        known = set(self.cdas) | set(self.vdas)
        for node, children in self.vdas.items():
            if not children:
                raise LeafIsVda(f"inner node {node!r} has no children")
            for child in children:
                if child not in known:
                    raise GraphError(f"{node!r} fuses unknown node {child!r}")
        agent_ids = set(agent_ids)
        for node, agent_id in self.cdas.items():
            if agent_id not in agent_ids:
                raise DanglingAgent(f"leaf {node!r} needs agent {agent_id!r}")
        # Iterative DFS with colors; recursion depth is attacker-adjacent.
        WHITE, GRAY, BLACK = 0, 1, 2
        color = {n: WHITE for n in known}
        for start in known:
            if color[start] != WHITE:
                continue
            stack = [(start, iter(self.vdas.get(start, ())))]
            color[start] = GRAY
            while stack:
                node, children = stack[-1]
                advanced = False
                for child in children:
                    if color[child] == GRAY:
                        raise CycleDetected(f"cycle through {child!r}")
                    if color[child] == WHITE:
                        color[child] = GRAY
                        stack.append((child, iter(self.vdas.get(child, ()))))
                        advanced = True
                        break
                if not advanced:
                    color[node] = BLACK
                    stack.pop()
        reachable = self.descendants(self.root) | {self.root}
        unreachable = known - reachable
        if unreachable and not allow_orphans:
            raise GraphError(f"unreachable from root: {sorted(unreachable)}")
        for node, children in self.vdas.items():
            if self.root in children:
                raise GraphError(f"root cannot be fused by {node!r}")

    def descendants(self, node: str) -> set:
        """All nodes strictly below ``node``."""
        seen: set = set()
        stack = list(self.vdas.get(node, ()))
        while stack:
            current = stack.pop()
            if current in seen:
                continue
            seen.add(current)
            stack.extend(self.vdas.get(current, ()))
        return seen

    def leaves_under(self, node: str) -> set:
        """Agent-backed nodes at or below ``node``."""
        if node in self.cdas:
            return {node}
        return {d for d in self.descendants(node) if d in self.cdas}


def evaluate(graph: FusionGraph, leaf_diagnoses: Mapping) -> dict:
    """Fuse leaf mass triples bottom-up; returns a triple for every node.

    Memoized post-order walk, so shared children are computed once.  Total
    conflict at an inner node degrades that node to the vacuous triple
    rather than aborting the request.
    """
    per_node: dict = {}

    def fuse(node: str) -> Diagnosis:
        cached = per_node.get(node)
        if cached is not None:
            return cached
        if node in graph.cdas:
            result = leaf_diagnoses[node]
        else:
            children = [fuse(child) for child in graph.vdas[node]]
            try:
                result = combine_all(children)
            except TotalConflict:
                log.warning("total conflict at %s; reporting full uncertainty", node)
                result = VACUOUS
        per_node[node] = result
        return result

    for node in graph.vdas:
        fuse(node)
    for node in graph.cdas:
        fuse(node)
    return per_node


@dataclass
class DiagnosisTrace:
    """Everything one request produced: features, per-node triples, verdict."""

    per_node: dict
    features: dict
    verdict: Decision

    @property
    def global_diagnosis(self) -> Diagnosis:
        return self.per_node[self._root]

    _root: str = field(default="", repr=False)


def diagnose_request(graph: FusionGraph, agents: Mapping, record, session) -> DiagnosisTrace:
    """Run every leaf agent on its feature and fuse the graph once."""
    features = {}
    leaf_diagnoses = {}
    for node, agent_id in graph.cdas.items():
        agent = agents[agent_id]
        x = extract_feature(agent.model.feature_kind, record, session)
        features[node] = x
        leaf_diagnoses[node] = agent.diagnose(x)
    per_node = evaluate(graph, leaf_diagnoses)
    trace = DiagnosisTrace(
        per_node=per_node,
        features=features,
        verdict=decide(per_node[graph.root]),
        _root=graph.root,
    )
    return trace


def default_topology() -> FusionGraph:
    """Two views over four leaves: request-level and session-level evidence."""
    return FusionGraph(
        root="root",
        cdas={
            "request_char": "request_char",
            "request_token": "request_token",
            "session_char": "session_char",
            "session_error": "session_error",
        },
        vdas={
            "request_view": ("request_char", "request_token"),
            "session_view": ("session_char", "session_error"),
            "root": ("request_view", "session_view"),
        },
    )
