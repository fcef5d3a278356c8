"""
Fusing uncertain verdicts with belief masses
============================================

Each diagnoser reports a mass triple (normal, intrusive, unknown)
rather than a hard label.  The unknown mass is honest ignorance: it
sides with whichever specific hypothesis other sources support, so a
weak detector cannot drag down a confident one.
"""

from driftguard.evidence import (
    VACUOUS,
    Diagnosis,
    TotalConflict,
    combine,
    combine_all,
    decide,
)


def show(tag, d):
    print(f"{tag:24s} N={d.m_n:.4f} I={d.m_i:.4f} U={d.m_u:.4f}")


# Two sources lean normal with different confidence.  Combination
# reinforces the shared hypothesis and shrinks the unknown mass.
a = Diagnosis(0.6, 0.1, 0.3)
b = Diagnosis(0.5, 0.2, 0.3)
show("source a", a)
show("source b", b)
show("a (+) b", combine(a, b))
print()

# Head-on disagreement: equal and opposite evidence cancels out and
# nearly all mass returns to the specific hypotheses split evenly.
show("confident normal", Diagnosis(0.9, 0.0, 0.1))
show("confident intrusive", Diagnosis(0.0, 0.9, 0.1))
show("fused", combine(Diagnosis(0.9, 0.0, 0.1), Diagnosis(0.0, 0.9, 0.1)))
print()

# The vacuous triple changes nothing: an untrained or silent agent can
# sit in the graph without distorting its siblings.
show("a (+) vacuous", combine(a, VACUOUS))
print()

# Fully certain and fully opposed sources have no compatible mass at
# all; that case is an explicit error, and the graph evaluator treats
# the pair as uninformative instead of crashing the stream.
try:
    combine(Diagnosis(1.0, 0.0, 0.0), Diagnosis(0.0, 1.0, 0.0))
except TotalConflict as exc:
    print("total conflict:", exc)
print()

# Order never matters, so a combination graph can fuse children in
# whatever order the topology walk produces.
sources = [a, b, Diagnosis(0.2, 0.3, 0.5), VACUOUS]
show("fold forward", combine_all(sources))
show("fold reversed", combine_all(sources[::-1]))
print()

# A diagnosis becomes a decision by argmax over the specific masses.
# Ties flag intrusive: when evidence cannot separate the hypotheses,
# the fail-safe for a detector is to raise its hand.
verdict = decide(combine(a, b))
print(f"decision: {verdict.label} (belief {verdict.belief:.4f})")
tie = decide(Diagnosis(0.45, 0.45, 0.10))
print(f"tie decides: {tie.label}")
