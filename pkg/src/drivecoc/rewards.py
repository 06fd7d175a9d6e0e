"""Rollout rewards: reasoning score, reasoning-action consistency and trajectory quality."""

from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._validation import ValidationError
from .coc import MockJudge, parse_intent
from .coc.schema import LateralIntent, LongitudinalIntent
from .dynamics import FitConfig, fit_controls, jerk_profile
from .geometry import OrientedBox, boxes_overlap
from .meta_actions import DetectorConfig, Lateral, Longitudinal, detect_meta_actions

LONGITUDINAL_CLASS = {
    Longitudinal.GentleAccelerate: LongitudinalIntent.Accelerate,
    Longitudinal.StrongAccelerate: LongitudinalIntent.Accelerate,
    Longitudinal.GentleDecelerate: LongitudinalIntent.Decelerate,
    Longitudinal.StrongDecelerate: LongitudinalIntent.Decelerate,
    Longitudinal.MaintainSpeed: LongitudinalIntent.MaintainSpeed,
    Longitudinal.Stop: LongitudinalIntent.Stop,
    Longitudinal.Reverse: LongitudinalIntent.Reverse,
}
LATERAL_CLASS = {
    Lateral.SteerLeft: LateralIntent.Left,
    Lateral.SharpSteerLeft: LateralIntent.Left,
    Lateral.ReverseLeft: LateralIntent.Left,
    Lateral.SteerRight: LateralIntent.Right,
    Lateral.SharpSteerRight: LateralIntent.Right,
    Lateral.ReverseRight: LateralIntent.Right,
    Lateral.GoStraight: LateralIntent.Straight,
}
# slowing and stopping are one decision seen at different moments
COMPATIBLE = {frozenset({LongitudinalIntent.Decelerate, LongitudinalIntent.Stop})}


@dataclass(frozen=True)
class RewardWeights:
    lambda_l2: float = 1.0
    lambda_coll: float = 10.0
    lambda_jerk: float = 0.01
    w_reason: float = 0.2
    w_consistency: float = 1.0
    ego_length: float = 4.8
    ego_width: float = 2.0
    # the quality reward is the negated weighted penalty, so larger is better
    sign_convention: str = "negated_penalty"

    def __post_init__(self):
        for name in ("lambda_l2", "lambda_coll", "lambda_jerk", "w_reason", "w_consistency"):
            if not getattr(self, name) >= 0:
                raise ValidationError(f"{name} must be nonnegative", field=name)
        if self.ego_length <= 0 or self.ego_width <= 0:
            raise ValidationError("ego box extents must be positive", field="ego_length")
        if self.sign_convention != "negated_penalty":
            raise ValidationError("only the negated_penalty convention is supported", field="sign_convention")

    def ego_box(self):
        return OrientedBox(0.0, 0.0, 0.0, self.ego_length, self.ego_width)


@dataclass(frozen=True)
class ConsistencyConfig:
    window: int = 30
    stop_min_frames: int = 10
    lateral_min_frames: int = 5


class RewardBreakdown(NamedTuple):
    r_reason: float
    r_consistency: int
    r_traj: float
    total: float

    def to_dict(self):
        return self._asdict()


def dominant_actions(profile, keyframe=0, cfg=None):
    """Summarize the frames ``[keyframe, keyframe + window]`` into one intent per channel.

    Longitudinal: Stop if held for at least ``stop_min_frames`` frames,
    otherwise the most frequent class (earliest on ties). Lateral: the
    direction of the first turn run of at least ``lateral_min_frames``
    frames, otherwise Straight; a lane change bends both ways, and it is the
    first bend that states the maneuver.
    """
    cfg = cfg or ConsistencyConfig()
    frames = profile.frames[keyframe:keyframe + cfg.window + 1]
    if not frames:
        raise ValidationError("no frames after the keyframe", field="keyframe")
    lon = [LONGITUDINAL_CLASS[f.longitudinal] for f in frames]
    if lon.count(LongitudinalIntent.Stop) >= cfg.stop_min_frames:
        lon_dom = LongitudinalIntent.Stop
    else:
        counts = Counter(lon)
        best = max(counts.values())
        lon_dom = next(c for c in lon if counts[c] == best)
    lat = [LATERAL_CLASS[f.lateral] for f in frames]
    lat_dom = LateralIntent.Straight
    run_label, run = None, 0
    for lab in lat:
        run = run + 1 if lab == run_label else 1
        run_label = lab
        if lab is not LateralIntent.Straight and run >= cfg.lateral_min_frames:
            lat_dom = lab
            break
    return lon_dom, lat_dom


def consistency_reward(intent, profile, keyframe=0, cfg=None):
    """1 when the parsed intent agrees with the trajectory on both channels, else 0."""
    if intent.longitudinal_intent is LongitudinalIntent.Unknown or intent.lateral_intent is LateralIntent.Unknown:
        return 0
    lon, lat = dominant_actions(profile, keyframe, cfg)
    lon_ok = intent.longitudinal_intent == lon or frozenset({intent.longitudinal_intent, lon}) in COMPATIBLE
    return int(lon_ok and intent.lateral_intent == lat)


def _check_agents(traj, agents):
    if agents is None:
        return [[] for _ in range(len(traj))]
    if len(agents) != len(traj):
        raise ValidationError(
            f"agents cover {len(agents)} frames, trajectory has {len(traj)}",
            field="agents", expected=len(traj), got=len(agents),
        )
    return agents


def collision_indicator(ego_traj, ego_box, agents):
    """1 if the ego box, posed at any waypoint, overlaps an agent box at that frame."""
    agents = _check_agents(ego_traj, agents)
    for (x, y, yaw), frame in zip(ego_traj.waypoints, agents):
        if not frame:
            continue
        ego = ego_box.posed(x, y, yaw)
        if any(boxes_overlap(ego, other) for other in frame):
            return 1
    return 0


def traj_quality(pred, expert, agents=None, weights=None, fit_cfg=None):
    """Negated penalty: L2 imitation + collision + mean squared jerk of the fitted controls."""
    weights = weights or RewardWeights()
    if len(pred) != len(expert):
        raise ValidationError(
            f"prediction has {len(pred)} waypoints, expert has {len(expert)}",
            field="pred", expected=len(expert), got=len(pred),
        )
    l2 = float(np.mean(np.sum((pred.xy - expert.xy) ** 2, axis=1)))
    coll = collision_indicator(pred, weights.ego_box(), agents)
    jerk = float(np.mean(jerk_profile(fit_controls(pred, fit_cfg or FitConfig())) ** 2))
    return -(weights.lambda_l2 * l2 + weights.lambda_coll * coll + weights.lambda_jerk * jerk)


def total_reward(rollout, gt, weights=None, judge=None, detector=None, consistency=None):
    """Combine the three reward terms for one rollout.

    ``rollout`` holds ``trace`` and ``trajectory``; ``gt`` holds ``trace``,
    ``trajectory`` (the expert) and optionally ``agents``. The rollout
    trajectory starts at the keyframe, so consistency is judged on its own
    first frames.
    """
    weights = weights or RewardWeights()
    judge = judge or MockJudge()
    r_reason = float(judge.rubric(gt["trace"], rollout["trace"]))
    traj = rollout["trajectory"]
    profile = detect_meta_actions(traj, fit_controls(traj), detector or DetectorConfig())
    r_cons = consistency_reward(parse_intent(rollout["trace"]), profile, 0, consistency)
    r_traj = traj_quality(traj, gt["trajectory"], gt.get("agents"), weights)
    total = weights.w_reason * r_reason + weights.w_consistency * r_cons + r_traj
    return RewardBreakdown(r_reason, r_cons, r_traj, total)
