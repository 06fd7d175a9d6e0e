import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from drivecoc._validation import ValidationError
from drivecoc.coc import (
    CocRecord,
    ComponentCategory,
    CriticalComponent,
    DrivingDecision,
    LateralDecision,
    LateralIntent,
    LongitudinalDecision,
    LongitudinalIntent,
    MockJudge,
    Side,
    Violation,
    component_overlap,
    compose_trace,
    judge_dataset_sample,
    judge_reasoning,
    make_judge,
    mentioned_components,
    parse_intent,
    project_decision,
    split_clauses,
    validate_record,
)
from drivecoc.coc.schema import SIDE_OPTIONAL, SIDE_REQUIRED

PED = CriticalComponent("CriticalObject", {"type": "pedestrian", "motion": "crossing", "pose": "ahead"})
LIGHT = CriticalComponent("TrafficLight", {"state": "red"})
Lon, Lat = LongitudinalIntent, LateralIntent


def intent(text):
    p = parse_intent(text)
    return p.longitudinal_intent, p.lateral_intent


def all_decisions():
    for lon in [None, *LongitudinalDecision]:
        for lat in [None, *LateralDecision]:
            sides = [Side.Left, Side.Right] if lat in SIDE_REQUIRED | SIDE_OPTIONAL else [None]
            for side in sides:
                yield DrivingDecision(lon, lat, side)


# schema

def test_closed_set_sizes():
    assert len(LongitudinalDecision) == 7
    assert len(LateralDecision) == 8
    assert len(ComponentCategory) == 7


def test_side_rules():
    with pytest.raises(ValidationError):
        DrivingDecision(None, "LaneChange")
    with pytest.raises(ValidationError):
        DrivingDecision(None, "LaneKeeping", side="Left")
    DrivingDecision(None, "MergeSplit")
    DrivingDecision(None, "MergeSplit", side="Right")


def test_unknown_names_rejected():
    with pytest.raises(ValidationError):
        DrivingDecision("Stop")
    with pytest.raises(ValidationError):
        CriticalComponent("Weather")
    with pytest.raises(ValidationError):
        CocRecord.from_dict({"decision": {}, "bogus": 1})
    with pytest.raises(ValidationError):
        DrivingDecision.from_dict({"longitudinal": "Yield", "extra": 1})


def test_uncertainty_only_for_critical_objects():
    CriticalComponent("CriticalObject", {"type": "cyclist"}, uncertainty="High")
    with pytest.raises(ValidationError):
        CriticalComponent("TrafficLight", {"state": "red"}, uncertainty="Low")


def test_record_round_trip_for_every_decision():
    for d in all_decisions():
        comps = () if d.is_none else (PED,)
        rec = CocRecord(d, comps, compose_trace(d, comps, 0), 20, "x", "cam0.jpg")
        assert CocRecord.from_dict(rec.to_dict()) == rec


# composition

def test_family_a_example():
    assert compose_trace(DrivingDecision("Yield"), [PED], family="A") == \
        "yielding because a pedestrian is crossing ahead"


def test_none_decision():
    assert compose_trace(DrivingDecision(), []) == ""
    with pytest.raises(ValidationError):
        compose_trace(DrivingDecision(), [PED])


def test_compose_is_seeded():
    d = DrivingDecision("Yield", "LaneKeeping")
    assert compose_trace(d, [PED], 5) == compose_trace(d, [PED], np.random.default_rng(5))
    assert len({compose_trace(d, [PED], s) for s in range(30)}) == 3


def test_components_appear_verbatim():
    for fam in "ABC":
        trace = compose_trace(DrivingDecision("StopForStaticConstraints"), [PED, LIGHT], family=fam)
        assert "a pedestrian is crossing ahead" in trace
        assert "the traffic light is red" in trace


@pytest.mark.parametrize("family", ["A", "B", "C"])
def test_compose_parse_closure_per_family(family):
    for d in all_decisions():
        comps = () if d.is_none else (PED, LIGHT)
        got = parse_intent(compose_trace(d, comps, family=family))
        assert got == project_decision(d), (d, family)


# parsing

def test_parse_examples():
    assert intent("decelerate and stop for the red light")[0] is Lon.Stop
    assert intent("") == (Lon.Unknown, Lat.Unknown)
    assert intent("change lane to the left to pass the slow truck")[1] is Lat.Left


@pytest.mark.parametrize("text,expected", [
    ("Keep lane and maintain speed", (Lon.MaintainSpeed, Lat.Straight)),
    ("Reverse out of the spot", (Lon.Reverse, Lat.Unknown)),
    ("Turn right at the intersection since the route requires it", (Lon.Unknown, Lat.Right)),
    ("Nudge left around the cone", (Lon.Unknown, Lat.Left)),
    ("Because the light is red, stop.", (Lon.Stop, Lat.Unknown)),
    ("Do not accelerate; keep lane", (Lon.Unknown, Lat.Straight)),
    ("Slow down because the car ahead is braking", (Lon.Decelerate, Lat.Unknown)),
    ("The car ahead is stopped so we wait and keep lane", (Lon.Unknown, Lat.Straight)),
    ("blah blah", (Lon.Unknown, Lat.Unknown)),
])
def test_parse_rules(text, expected):
    assert intent(text) == expected


def test_causal_clause_is_not_an_action():
    main, causal = split_clauses("Slow down because the car ahead is stopping.")
    assert "stopping" in causal and "stopping" not in main


@given(st.text(max_size=200))
def test_parse_never_fails(text):
    p = parse_intent(text)
    assert p.longitudinal_intent in Lon and p.lateral_intent in Lat


def test_projection_table():
    assert project_decision(DrivingDecision("SetSpeedTracking", "PullOver")) == \
        parse_intent("maintain speed and turn right")
    assert project_decision(DrivingDecision("SetSpeedTracking", speed_delta=1.0)).longitudinal_intent is Lon.Accelerate
    assert project_decision(DrivingDecision("GapSearching", speed_delta=1.0)).longitudinal_intent is Lon.Accelerate
    assert project_decision(DrivingDecision("Yield")).longitudinal_intent is Lon.Decelerate
    assert project_decision(DrivingDecision("StopForStaticConstraints")).longitudinal_intent is Lon.Stop
    assert project_decision(DrivingDecision(None, "MergeSplit")).lateral_intent is Lat.Unknown
    assert project_decision(DrivingDecision(None, "Turn", "Left")).lateral_intent is Lat.Left
    assert project_decision(DrivingDecision(None, "PullOver"), curb_side=Side.Left).lateral_intent is Lat.Left


# validation

def good_record():
    d = DrivingDecision("Yield", "LaneKeeping")
    return CocRecord(d, (PED,), compose_trace(d, [PED], 0), keyframe=20)


def test_validate_rules():
    assert validate_record(good_record()) == []
    assert validate_record(CocRecord(DrivingDecision())) == []
    d = DrivingDecision("Yield")
    assert validate_record(CocRecord(d, (), "yield to the pedestrian", 20)) == [Violation.CausalCoverage]
    late = CriticalComponent("CriticalObject", {"type": "cyclist"}, frame=30)
    assert validate_record(CocRecord(d, (late,), "yield", 20)) == [Violation.CausalLocality]
    assert validate_record(CocRecord(d, (PED,), "  ", 20)) == [Violation.DecisionGrounding]
    assert validate_record(CocRecord(DrivingDecision(), (PED,), "", 20)) == [Violation.Minimality]


# judges

def test_mock_rubric_tiers():
    gt = "Stop and keep lane because the traffic light is red."
    assert judge_reasoning(gt, gt) == 5
    assert judge_reasoning(gt, "Accelerate and keep lane because the traffic light is red.") <= 1
    assert judge_reasoning(gt, "Stop and keep lane because a pedestrian is crossing.") == 3
    assert judge_reasoning(gt, "Stop because the traffic light is red.") == 2
    assert judge_reasoning(gt, "Maintain speed and turn left.") == 1
    assert judge_reasoning(gt, "qwerty zxcv") in (0, 1)


def test_component_overlap():
    assert mentioned_components("Stop because the traffic light is red") == {"traffic light"}
    assert component_overlap("stop for the pedestrian", "stop for the pedestrians") == 1.0
    assert component_overlap("stop for the cyclist", "stop for the pedestrian") == 0.0


def test_mock_triplet():
    ref = good_record()
    assert judge_dataset_sample(ref, ref) == (True, True, True)
    bare = CocRecord(ref.decision, (), ref.trace, 20)
    assert judge_dataset_sample(bare, ref) == (True, False, False)
    other = CocRecord(DrivingDecision("AccelerationForPassing", "LaneKeeping"), ref.components, ref.trace, 20)
    assert judge_dataset_sample(other, ref)[0] is False


def test_make_judge():
    assert isinstance(make_judge("mock"), MockJudge)
    with pytest.raises(ValidationError):
        make_judge("oracle")


def test_image_is_pass_through():
    gt = "Stop because the traffic light is red."
    assert judge_reasoning(gt, gt, image="front.jpg") == judge_reasoning(gt, gt)


def test_rubric_many_keeps_order():
    j = MockJudge()
    pairs = list(itertools.product(["Stop and keep lane.", "Accelerate."], repeat=2))
    assert j.rubric_many(pairs) == [j.rubric(a, b) for a, b in pairs]
