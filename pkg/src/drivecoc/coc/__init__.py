from .judge import (
    HttpJudge,
    JudgeProtocolError,
    JudgeTransportError,
    MockJudge,
    component_overlap,
    make_judge,
)
from .lexicon import compose_trace, component_phrase, mentioned_components, parse_intent, split_clauses
from .schema import (
    CocRecord,
    ComponentCategory,
    CriticalComponent,
    DrivingDecision,
    LateralDecision,
    LateralIntent,
    LongitudinalDecision,
    LongitudinalIntent,
    ParsedIntent,
    Side,
    Uncertainty,
    project_decision,
)
from .validate import Violation, validate_record


def judge_reasoning(gt_trace, pred_trace, judge=None, image=None):
    """Rubric score 0..5 for ``pred_trace`` against ``gt_trace``."""
    return (judge or MockJudge()).rubric(gt_trace, pred_trace, image=image)


def judge_dataset_sample(rec, reference, judge=None):
    """(decision match, causal factors present, cause-effect valid)."""
    return tuple((judge or MockJudge()).triplet(rec, reference))


__all__ = [
    "HttpJudge",
    "JudgeProtocolError",
    "JudgeTransportError",
    "MockJudge",
    "component_overlap",
    "make_judge",
    "compose_trace",
    "component_phrase",
    "mentioned_components",
    "parse_intent",
    "split_clauses",
    "CocRecord",
    "ComponentCategory",
    "CriticalComponent",
    "DrivingDecision",
    "LateralDecision",
    "LateralIntent",
    "LongitudinalDecision",
    "LongitudinalIntent",
    "ParsedIntent",
    "Side",
    "Uncertainty",
    "project_decision",
    "Violation",
    "validate_record",
    "judge_reasoning",
    "judge_dataset_sample",
]
