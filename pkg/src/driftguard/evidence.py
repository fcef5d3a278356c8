"""Belief-mass calculus over the three-way frame {normal, intrusive, unknown}.

Every diagnoser in the system emits a *diagnosis*: a normalized mass triple
(m_n, m_i, m_u) expressing how strongly the evidence supports the request
being normal, intrusive, or simply unknown.  The unknown mass behaves as the
universal hypothesis {normal, intrusive}: it is compatible with both specific
hypotheses, so under combination it reinforces whichever side the other
source supports.

Two diagnoses are fused with the classical evidence-combination rule:
the masses of all pairs of compatible hypotheses are multiplied and summed,
and the result is renormalized by the total non-conflicting mass.  The rule
is commutative and associative, with the vacuous triple (0, 0, 1) as its
identity, which makes fusion over an arbitrary combination graph
well-defined regardless of child order.
"""

from __future__ import annotations

import math
from typing import Iterable, NamedTuple

NORMAL = "N"
INTRUSIVE = "I"

# Mass ties below this margin are treated as exact ties.
TIE_EPS = 1e-12
# Conflict this close to 1 means both sources are fully certain and opposed.
CONFLICT_EPS = 1e-12


class TotalConflict(ArithmeticError):
    """Raised when two diagnoses are fully certain and contradictory.

    The combination rule divides by (1 - conflict); at conflict = 1 the
    result is undefined.  Callers that fuse many sources treat the pair as
    carrying no usable information (see :data:`VACUOUS`).
    """


class Diagnosis(NamedTuple):
    """Normalized mass triple; m_n + m_i + m_u = 1, all masses >= 0."""

    m_n: float
    m_i: float
    m_u: float


class Decision(NamedTuple):
    """The preferred specific hypothesis of a diagnosis.

    ``label`` is always "N" or "I" -- never "unknown"; the unknown mass only
    lowers ``belief``.  ``uncertain`` is set later by the meta-diagnosis
    layer when an integrity violation taints the emitted decision.
    """

    label: str
    belief: float
    uncertain: bool = False


#: The identity element of combination: all mass on the universal hypothesis.
VACUOUS = Diagnosis(0.0, 0.0, 1.0)


def is_valid(d: Diagnosis, tol: float = 1e-9) -> bool:
    """True if all masses are non-negative and sum to 1 within ``tol``."""
    return (
        d.m_n >= 0.0
        and d.m_i >= 0.0
        and d.m_u >= 0.0
        and math.isclose(d.m_n + d.m_i + d.m_u, 1.0, rel_tol=0.0, abs_tol=tol)
    )


def decide(d: Diagnosis) -> Decision:
    """Pick the specific hypothesis with maximal mass.

    Ties (|m_n - m_i| <= TIE_EPS) resolve to intrusive: when the evidence
    cannot separate the two, flagging is the fail-safe choice for a
    detector.  The returned belief is the winning mass.
    """
    if d.m_n - d.m_i > TIE_EPS:
        return Decision(NORMAL, d.m_n)
    return Decision(INTRUSIVE, d.m_i)


def combine(d1: Diagnosis, d2: Diagnosis) -> Diagnosis:
    """Fuse two diagnoses with the evidence-combination rule.

    Conflict is the mass assigned to incompatible pairs (one source says
    normal, the other intrusive); the surviving products are renormalized
    by (1 - conflict).  Raises :class:`TotalConflict` when the conflict is
    1 within CONFLICT_EPS.
    """
    conflict = d1.m_n * d2.m_i + d1.m_i * d2.m_n
    denom = 1.0 - conflict
    if denom <= CONFLICT_EPS:
        raise TotalConflict(f"combined conflict {conflict} leaves no mass")
    # The cross terms are summed as their own pair so swapping the operands
    # permutes only two-operand additions; commutativity is then bit-exact.
    cross_n = d1.m_n * d2.m_u + d1.m_u * d2.m_n
    cross_i = d1.m_i * d2.m_u + d1.m_u * d2.m_i
    m_n = (d1.m_n * d2.m_n + cross_n) / denom
    m_i = (d1.m_i * d2.m_i + cross_i) / denom
    m_u = (d1.m_u * d2.m_u) / denom
    # Renormalize to absorb floating-point drift from the divisions.
    total = m_n + m_i + m_u
    return Diagnosis(m_n / total, m_i / total, m_u / total)


def combine_all(diagnoses: Iterable[Diagnosis]) -> Diagnosis:
    """Left-fold of :func:`combine`; order is immaterial by associativity.

    Raises ValueError on an empty input and propagates TotalConflict.
    """
    it = iter(diagnoses)
    try:
        acc = next(it)
    except StopIteration:
        raise ValueError("combine_all requires at least one diagnosis") from None
    for d in it:
        acc = combine(acc, d)
    return acc
