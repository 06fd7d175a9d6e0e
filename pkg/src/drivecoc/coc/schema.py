"""Closed-set driving decisions, critical components and CoC records."""

import json
from dataclasses import dataclass, field
from enum import Enum

from .._validation import ValidationError


class LongitudinalDecision(str, Enum):
    SetSpeedTracking = "SetSpeedTracking"
    LeadObstacleFollowing = "LeadObstacleFollowing"
    SpeedAdaptation = "SpeedAdaptation"
    GapSearching = "GapSearching"
    AccelerationForPassing = "AccelerationForPassing"
    Yield = "Yield"
    StopForStaticConstraints = "StopForStaticConstraints"


class LateralDecision(str, Enum):
    LaneKeeping = "LaneKeeping"
    MergeSplit = "MergeSplit"
    OutOfLaneNudge = "OutOfLaneNudge"
    InLaneNudge = "InLaneNudge"
    LaneChange = "LaneChange"
    PullOver = "PullOver"
    Turn = "Turn"
    LateralManeuverAbort = "LateralManeuverAbort"


class Side(str, Enum):
    Left = "Left"
    Right = "Right"


class LongitudinalIntent(str, Enum):
    Accelerate = "Accelerate"
    Decelerate = "Decelerate"
    Stop = "Stop"
    MaintainSpeed = "MaintainSpeed"
    Reverse = "Reverse"
    Unknown = "Unknown"


class LateralIntent(str, Enum):
    Left = "Left"
    Right = "Right"
    Straight = "Straight"
    Unknown = "Unknown"


class ComponentCategory(str, Enum):
    CriticalObject = "CriticalObject"
    TrafficLight = "TrafficLight"
    YieldStopControl = "YieldStopControl"
    RoadEvent = "RoadEvent"
    LaneMarking = "LaneMarking"
    RoutingIntent = "RoutingIntent"
    OddConstraint = "OddConstraint"


class Uncertainty(str, Enum):
    Low = "Low"
    High = "High"


# items whose definition asks for a left/right qualifier
SIDE_REQUIRED = frozenset({
    LateralDecision.OutOfLaneNudge,
    LateralDecision.InLaneNudge,
    LateralDecision.LaneChange,
    LateralDecision.Turn,
})
# a facility change may go either way; the side is recorded when known
SIDE_OPTIONAL = frozenset({LateralDecision.MergeSplit})


def _enum(cls, value, name):
    if value is None or isinstance(value, cls):
        return value
    try:
        return cls(value)
    except ValueError:
        raise ValidationError(f"{value!r} is not a valid {name}", field=name, value=value) from None


@dataclass(frozen=True)
class DrivingDecision:
    longitudinal: LongitudinalDecision | None = None
    lateral: LateralDecision | None = None
    side: Side | None = None
    speed_delta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "longitudinal", _enum(LongitudinalDecision, self.longitudinal, "longitudinal"))
        object.__setattr__(self, "lateral", _enum(LateralDecision, self.lateral, "lateral"))
        object.__setattr__(self, "side", _enum(Side, self.side, "side"))
        if self.lateral in SIDE_REQUIRED and self.side is None:
            raise ValidationError(f"{self.lateral.value} requires a side", field="side")
        if self.side is not None and self.lateral not in SIDE_REQUIRED | SIDE_OPTIONAL:
            raise ValidationError(
                f"side is not defined for lateral decision {self.lateral}", field="side"
            )

    @property
    def is_none(self):
        return self.longitudinal is None and self.lateral is None

    def to_dict(self):
        d = {
            "longitudinal": self.longitudinal.value if self.longitudinal else None,
            "lateral": self.lateral.value if self.lateral else None,
        }
        if self.side is not None:
            d["side"] = self.side.value
        if self.speed_delta is not None:
            d["speed_delta"] = self.speed_delta
        return d

    @classmethod
    def from_dict(cls, d):
        _reject_unknown(d, {"longitudinal", "lateral", "side", "speed_delta"}, "decision")
        return cls(d.get("longitudinal"), d.get("lateral"), d.get("side"), d.get("speed_delta"))


@dataclass(frozen=True)
class CriticalComponent:
    """A causal factor observed at ``frame`` (10 Hz index within the clip)."""

    category: ComponentCategory
    attributes: dict = field(default_factory=dict)
    uncertainty: Uncertainty | None = None
    frame: int = 0

    def __post_init__(self):
        object.__setattr__(self, "category", _enum(ComponentCategory, self.category, "category"))
        if self.category is None:
            raise ValidationError("component category is required", field="category")
        object.__setattr__(self, "uncertainty", _enum(Uncertainty, self.uncertainty, "uncertainty"))
        if self.uncertainty is not None and self.category is not ComponentCategory.CriticalObject:
            raise ValidationError("uncertainty applies to critical objects only", field="uncertainty")
        attrs = {str(k): str(v) for k, v in dict(self.attributes).items()}
        object.__setattr__(self, "attributes", attrs)

    def __hash__(self):
        return hash((self.category, tuple(sorted(self.attributes.items())), self.uncertainty, self.frame))

    def to_dict(self):
        d = {"category": self.category.value, "attributes": dict(self.attributes), "frame": self.frame}
        if self.uncertainty is not None:
            d["uncertainty"] = self.uncertainty.value
        return d

    @classmethod
    def from_dict(cls, d):
        _reject_unknown(d, {"category", "attributes", "uncertainty", "frame"}, "component")
        return cls(d["category"], d.get("attributes", {}), d.get("uncertainty"), int(d.get("frame", 0)))


@dataclass(frozen=True)
class CocRecord:
    decision: DrivingDecision
    components: tuple = ()
    trace: str = ""
    keyframe: int = 0
    scenario: str = ""
    image: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))

    def to_dict(self):
        d = {
            "v": 1,
            "decision": self.decision.to_dict(),
            "components": [c.to_dict() for c in self.components],
            "trace": self.trace,
            "keyframe": self.keyframe,
            "scenario": self.scenario,
        }
        if self.image is not None:
            d["image"] = self.image
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        _reject_unknown(d, {"v", "decision", "components", "trace", "keyframe", "scenario", "image"}, "record")
        return cls(
            DrivingDecision.from_dict(d.get("decision", {})),
            tuple(CriticalComponent.from_dict(c) for c in d.get("components", [])),
            d.get("trace", ""),
            int(d.get("keyframe", 0)),
            d.get("scenario", ""),
            d.get("image"),
        )


def _reject_unknown(d, allowed, name):
    extra = set(d) - allowed
    if extra:
        raise ValidationError(f"unknown {name} keys: {sorted(extra)}", field=name)


@dataclass(frozen=True)
class ParsedIntent:
    longitudinal_intent: LongitudinalIntent = LongitudinalIntent.Unknown
    lateral_intent: LateralIntent = LateralIntent.Unknown

    def __post_init__(self):
        object.__setattr__(self, "longitudinal_intent", LongitudinalIntent(self.longitudinal_intent))
        object.__setattr__(self, "lateral_intent", LateralIntent(self.lateral_intent))

    def to_dict(self):
        return {"longitudinal": self.longitudinal_intent.value, "lateral": self.lateral_intent.value}


# decision -> channel intent; version bumps whenever a row changes
PROJECTION_VERSION = 1
LONGITUDINAL_PROJECTION = {
    LongitudinalDecision.SetSpeedTracking: LongitudinalIntent.MaintainSpeed,
    LongitudinalDecision.LeadObstacleFollowing: LongitudinalIntent.MaintainSpeed,
    LongitudinalDecision.SpeedAdaptation: LongitudinalIntent.Decelerate,
    LongitudinalDecision.GapSearching: LongitudinalIntent.Decelerate,
    LongitudinalDecision.AccelerationForPassing: LongitudinalIntent.Accelerate,
    LongitudinalDecision.Yield: LongitudinalIntent.Decelerate,
    LongitudinalDecision.StopForStaticConstraints: LongitudinalIntent.Stop,
}
# decisions whose speed direction follows ``speed_delta`` when it is given
SPEED_DELTA_DECISIONS = frozenset({LongitudinalDecision.SetSpeedTracking, LongitudinalDecision.GapSearching})
LATERAL_PROJECTION = {
    LateralDecision.LaneKeeping: LateralIntent.Straight,
    LateralDecision.LateralManeuverAbort: LateralIntent.Straight,
    LateralDecision.PullOver: LateralIntent.Right,
}


def project_decision(decision, curb_side=Side.Right):
    """Channel-level intent implied by a driving decision.

    Sided items take their side; pull-over goes toward ``curb_side``; a
    merge without a recorded side has no lateral direction (Unknown).
    """
    lon = LongitudinalIntent.Unknown
    if decision.longitudinal is not None:
        lon = LONGITUDINAL_PROJECTION[decision.longitudinal]
        if decision.longitudinal in SPEED_DELTA_DECISIONS and decision.speed_delta is not None:
            if decision.speed_delta > 0:
                lon = LongitudinalIntent.Accelerate
            elif decision.speed_delta < 0:
                lon = LongitudinalIntent.Decelerate
            else:
                lon = LongitudinalIntent.MaintainSpeed
    lat = LateralIntent.Unknown
    if decision.lateral is not None:
        if decision.side is not None:
            lat = LateralIntent(decision.side.value)
        elif decision.lateral is LateralDecision.PullOver:
            lat = LateralIntent(Side(curb_side).value)
        else:
            lat = LATERAL_PROJECTION.get(decision.lateral, LateralIntent.Unknown)
    return ParsedIntent(lon, lat)
