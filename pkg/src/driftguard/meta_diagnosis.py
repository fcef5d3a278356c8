"""Consistency checks over the fused graph, and the adaptation they trigger.

A consistency constraint names a scope of graph nodes whose decisions are
expected to agree, and marks the subset of that scope that is contestable.
When the scope disagrees, the non-contestable remainder is fused into a
reference decision, and every leaf agent under the contestable nodes is
retrained one step toward that reference using the feature value it just
saw.  The request's verdict is flagged uncertain, since the graph was
arguing with itself when it produced it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

from .evidence import Decision, combine_all, decide
from .fusion_graph import DiagnosisTrace, FusionGraph

log = logging.getLogger("driftguard")


class UnknownNode(ValueError):
    """A constraint references a node the graph does not have."""


@dataclass(frozen=True)
class IntegrityConstraint:
    """Decision-equality over ``scope``; ``mdcs`` is the contestable part."""

    constraint_id: str
    scope: tuple
    mdcs: tuple

    @property
    def reference_nodes(self) -> tuple:
        return tuple(n for n in self.scope if n not in set(self.mdcs))

    def validate(self, graph: FusionGraph) -> None:
        known = set(graph.cdas) | set(graph.vdas)
        missing = [n for n in (*self.scope, *self.mdcs) if n not in known]
        if missing:
            raise UnknownNode(f"{self.constraint_id}: unknown nodes {missing}")
        if len(self.scope) < 2:
            raise ValueError(f"{self.constraint_id}: scope needs >= 2 nodes")
        mdcs = set(self.mdcs)
        if not mdcs:
            raise ValueError(f"{self.constraint_id}: empty contestable set")
        if not mdcs <= set(self.scope):
            raise ValueError(f"{self.constraint_id}: mdcs outside scope")
        if mdcs == set(self.scope):
            raise ValueError(f"{self.constraint_id}: nothing left as reference")


def is_violated(constraint: IntegrityConstraint, per_node: Mapping) -> bool:
    """True when the scope's node decisions are not all the same label."""
    labels = {decide(per_node[n]).label for n in constraint.scope}
    return len(labels) > 1


def meta_diagnosis_set(constraint: IntegrityConstraint, graph: FusionGraph) -> set:
    """Leaf nodes under the contestable part: the agents put in question."""
    leaves: set = set()
    for node in constraint.mdcs:
        leaves |= graph.leaves_under(node)
    return leaves


def reference_decision(constraint: IntegrityConstraint, per_node: Mapping) -> Decision:
    """Fuse the non-contestable scope nodes and decide on the result."""
    triples = [per_node[n] for n in constraint.reference_nodes]
    return decide(combine_all(triples))


@dataclass
class MetaDiagnosisResult:
    """What the consistency pass did to one request."""

    violated: list = field(default_factory=list)
    mds: set = field(default_factory=set)
    reference_labels: dict = field(default_factory=dict)
    adapted_agents: list = field(default_factory=list)

    @property
    def uncertain(self) -> bool:
        return bool(self.violated)


def meta_step(
    graph: FusionGraph,
    trace: DiagnosisTrace,
    constraints: Sequence[IntegrityConstraint],
    agents: Mapping,
    ordinal: int,
    timestamp: float,
    event_sink: Optional[Callable[[dict], None]] = None,
) -> MetaDiagnosisResult:
    """Check every constraint against one request's trace; adapt on violation.

    Constraints run in declaration order.  An agent adapts at most once per
    request even when two violated constraints both implicate it; the first
    constraint's reference label wins.  Agents in frozen mode are skipped
    silently, so the same constraint set drives both live and replay runs.
    """
    result = MetaDiagnosisResult()
    for constraint in constraints:
        if not is_violated(constraint, trace.per_node):
            continue
        reference = reference_decision(constraint, trace.per_node)
        mds = meta_diagnosis_set(constraint, graph)
        result.violated.append(constraint.constraint_id)
        result.mds |= mds
        result.reference_labels[constraint.constraint_id] = reference.label
        adapted = []
        for node in sorted(mds):
            agent = agents[graph.cdas[node]]
            if agent.agent_id in result.adapted_agents:
                continue
            if not agent.adapt_enabled:
                continue
            agent.adapt(trace.features[node], reference.label)
            result.adapted_agents.append(agent.agent_id)
            adapted.append(agent.agent_id)
        if event_sink is not None:
            event_sink({
                "timestamp": timestamp,
                "ordinal": ordinal,
                "constraint": constraint.constraint_id,
                "mds": sorted(mds),
                "reference": reference.label,
                "adapted": adapted,
            })
        log.debug(
            "constraint %s violated at #%d: reference=%s adapted=%s",
            constraint.constraint_id, ordinal, reference.label, adapted,
        )
    return result
