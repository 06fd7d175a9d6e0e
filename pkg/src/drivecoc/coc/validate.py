"""Structural checks on CoC records."""

from enum import Enum


class Violation(str, Enum):
    DecisionGrounding = "DecisionGrounding"
    CausalCoverage = "CausalCoverage"
    CausalLocality = "CausalLocality"
    Minimality = "Minimality"


def validate_record(rec):
    """Violations of the record rules; an empty list means the record is well formed.

    - DecisionGrounding: a decision needs a non-empty trace
    - CausalCoverage: a decision must cite at least one component
    - CausalLocality: components must be observed at or before the keyframe
    - Minimality: no components without a decision
    """
    out = []
    has_decision = not rec.decision.is_none
    if has_decision and not rec.trace.strip():
        out.append(Violation.DecisionGrounding)
    if has_decision and not rec.components:
        out.append(Violation.CausalCoverage)
    if any(c.frame > rec.keyframe or c.frame < 0 for c in rec.components):
        out.append(Violation.CausalLocality)
    if not has_decision and rec.components:
        out.append(Violation.Minimality)
    return out
