"""Per-frame meta-action labels, transitions, keyframes and scenario tagging.

Labels are assigned at 10 Hz from the fitted controls: longitudinal classes
from speed and acceleration thresholds, lateral classes from the sign and
magnitude of curvature (positive = left). A per-channel run filter removes
flicker shorter than ``hysteresis_frames``.
"""

from dataclasses import asdict, dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from ._validation import ValidationError, wrap_angle
from .dynamics import fit_controls
from .episode import agent_tracks

__all__ = [
    "Longitudinal",
    "Lateral",
    "MetaAction",
    "DetectorConfig",
    "MetaActionProfile",
    "detect_meta_actions",
    "debounce",
    "transition_frames",
    "Keyframe",
    "select_keyframe",
    "ScenarioTag",
    "ScenarioRange",
    "tag_reactive_scenarios",
    "tag_proactive_scenarios",
]


class Longitudinal(str, Enum):
    GentleAccelerate = "GentleAccelerate"
    StrongAccelerate = "StrongAccelerate"
    GentleDecelerate = "GentleDecelerate"
    StrongDecelerate = "StrongDecelerate"
    MaintainSpeed = "MaintainSpeed"
    Stop = "Stop"
    Reverse = "Reverse"


class Lateral(str, Enum):
    SteerLeft = "SteerLeft"
    SteerRight = "SteerRight"
    SharpSteerLeft = "SharpSteerLeft"
    SharpSteerRight = "SharpSteerRight"
    GoStraight = "GoStraight"
    ReverseLeft = "ReverseLeft"
    ReverseRight = "ReverseRight"


DECELERATING = (Longitudinal.GentleDecelerate, Longitudinal.StrongDecelerate)


class MetaAction(NamedTuple):
    longitudinal: Longitudinal
    lateral: Lateral


@dataclass(frozen=True)
class DetectorConfig:
    a_gentle: float = 0.3
    a_strong: float = 2.0
    v_stop: float = 0.1
    kappa_steer: float = 0.02
    kappa_sharp: float = 0.1
    hysteresis_frames: int = 3
    # keyframing and scenario rules
    history_frames: int = 20
    buffer_s: float = 0.5
    lane_half_width: float = 1.75
    lead_range: float = 50.0
    vru_lookback_frames: int = 10
    lateral_speed: float = 0.2
    lane_change_sustain_frames: int = 5
    curve_min_frames: int = 10
    target_lane_window: float = 10.0
    lane_change_max_heading: float = 0.1

    def __post_init__(self):
        if not 0 < self.a_gentle < self.a_strong:
            raise ValidationError("need 0 < a_gentle < a_strong", field="a_gentle")
        if not 0 < self.kappa_steer < self.kappa_sharp:
            raise ValidationError("need 0 < kappa_steer < kappa_sharp", field="kappa_steer")
        if self.v_stop <= 0:
            raise ValidationError("v_stop must be > 0", field="v_stop")
        if int(self.hysteresis_frames) != self.hysteresis_frames or self.hysteresis_frames < 1:
            raise ValidationError("hysteresis_frames must be a positive integer", field="hysteresis_frames")
        if self.history_frames < 0 or self.buffer_s < 0:
            raise ValidationError("history_frames and buffer_s must be >= 0", field="history_frames")

    @property
    def buffer_frames(self):
        return int(round(self.buffer_s * 10))


@dataclass
class MetaActionProfile:
    frames: list
    thresholds: DetectorConfig

    def __len__(self):
        return len(self.frames)

    @property
    def longitudinal(self):
        return [f.longitudinal for f in self.frames]

    @property
    def lateral(self):
        return [f.lateral for f in self.frames]

    def to_dict(self):
        return {
            "frames": [[f.longitudinal.value, f.lateral.value] for f in self.frames],
            "thresholds": asdict(self.thresholds),
        }

    @classmethod
    def from_dict(cls, d):
        frames = [MetaAction(Longitudinal(lon), Lateral(lat)) for lon, lat in d["frames"]]
        return cls(frames, DetectorConfig(**d.get("thresholds", {})))


def _longitudinal(v, a, cfg):
    if v <= -cfg.v_stop:
        return Longitudinal.Reverse
    if abs(v) < cfg.v_stop:
        return Longitudinal.Stop
    if a >= cfg.a_strong:
        return Longitudinal.StrongAccelerate
    if a <= -cfg.a_strong:
        return Longitudinal.StrongDecelerate
    if a >= cfg.a_gentle:
        return Longitudinal.GentleAccelerate
    if a <= -cfg.a_gentle:
        return Longitudinal.GentleDecelerate
    return Longitudinal.MaintainSpeed


def _lateral(v, k, lon, cfg):
    if lon is Longitudinal.Stop:
        return Lateral.GoStraight
    if lon is Longitudinal.Reverse:
        # heading change while backing up: the path bends toward sign(k)
        if k >= cfg.kappa_steer:
            return Lateral.ReverseLeft
        if k <= -cfg.kappa_steer:
            return Lateral.ReverseRight
        return Lateral.GoStraight
    if k >= cfg.kappa_sharp:
        return Lateral.SharpSteerLeft
    if k <= -cfg.kappa_sharp:
        return Lateral.SharpSteerRight
    if k >= cfg.kappa_steer:
        return Lateral.SteerLeft
    if k <= -cfg.kappa_steer:
        return Lateral.SteerRight
    return Lateral.GoStraight


def debounce(labels, min_run):
    """Absorb interior runs shorter than ``min_run`` into the preceding run.

    The first and last runs are kept whatever their length, since a short run
    at a sequence edge may simply be cut off by the window.
    """
    labels = list(labels)
    if min_run <= 1 or len(labels) < 3:
        return labels
    runs = []
    for lab in labels:
        if runs and runs[-1][0] == lab:
            runs[-1][1] += 1
        else:
            runs.append([lab, 1])
    changed = True
    while changed:
        changed = False
        for i in range(1, len(runs) - 1):
            if runs[i][1] < min_run:
                runs[i - 1][1] += runs[i][1]
                del runs[i]
                # merge equal neighbors that now touch
                if i < len(runs) and runs[i][0] == runs[i - 1][0]:
                    runs[i - 1][1] += runs[i][1]
                    del runs[i]
                changed = True
                break
    return [lab for lab, n in runs for _ in range(n)]


def detect_meta_actions(traj, controls=None, cfg=None):
    """Label every frame with one longitudinal and one lateral meta action.

    ``controls`` defaults to the regularized fit of ``traj``. Frame ``i`` uses
    the control applied over step ``i`` and the speed reached at its end.
    """
    cfg = cfg or DetectorConfig()
    if controls is None:
        controls = fit_controls(traj)
    if len(controls) != len(traj):
        raise ValidationError(
            f"trajectory has {len(traj)} frames but controls have {len(controls)}",
            field="controls", expected=len(traj), got=len(controls),
        )
    if abs(controls.dt - traj.dt) > 1e-12:
        raise ValidationError("trajectory and controls disagree on dt", field="dt")
    a, k = controls.accel, controls.curvature
    v = traj.v0 + controls.dt * np.cumsum(a)
    lon = [_longitudinal(vi, ai, cfg) for vi, ai in zip(v, a)]
    lat = [_lateral(vi, ki, li, cfg) for vi, ki, li in zip(v, k, lon)]
    lon = debounce(lon, cfg.hysteresis_frames)
    lat = debounce(lat, cfg.hysteresis_frames)
    return MetaActionProfile([MetaAction(lo, la) for lo, la in zip(lon, lat)], cfg)


def transition_frames(profile):
    frames = profile.frames if isinstance(profile, MetaActionProfile) else list(profile)
    if not frames:
        raise ValidationError("empty meta-action profile", field="profile")
    return [i for i in range(1, len(frames)) if frames[i] != frames[i - 1]]


class Keyframe(NamedTuple):
    frame: int
    clamped: bool


def select_keyframe(transition_frame, history_frames=20, buffer_s=0.5):
    """Frame ``buffer_s`` before a behavior change, no earlier than the history window."""
    if transition_frame < 0:
        raise ValidationError("transition frame must be >= 0", field="transition_frame")
    raw = int(transition_frame) - int(round(buffer_s * 10))
    if raw < history_frames:
        return Keyframe(int(history_frames), True)
    return Keyframe(raw, False)


class ScenarioTag(NamedTuple):
    tag: str
    keyframe: int
    clamped: bool = False

    def to_dict(self):
        return {"tag": self.tag, "keyframe": self.keyframe, "clamped": self.clamped}


class ScenarioRange(NamedTuple):
    tag: str
    start: int
    end: int

    def to_dict(self):
        return {"tag": self.tag, "range": [self.start, self.end]}


def _to_ego(x, y, pose):
    """Point in the frame of ``pose`` (x forward, y left)."""
    dx, dy = x - pose[0], y - pose[1]
    c, s = np.cos(pose[2]), np.sin(pose[2])
    return c * dx + s * dy, -s * dx + c * dy


def _relative(box, pose):
    return _to_ego(box.x, box.y, pose)


def _in_corridor(box, pose, cfg):
    fwd, lat = _relative(box, pose)
    return 0.0 < fwd <= cfg.lead_range and abs(lat) <= cfg.lane_half_width


def _lead_agent(agents, pose, cfg):
    best, best_fwd = None, np.inf
    for box in agents:
        if _in_corridor(box, pose, cfg):
            fwd, _ = _relative(box, pose)
            if fwd < best_fwd:
                best, best_fwd = box, fwd
    return best


def _motion_start(offsets, end, cfg, dt):
    """Walk back from ``end`` over the contiguous run of lateral motion."""
    speed = np.abs(np.diff(offsets)) / dt
    start = end
    while start > 0 and speed[start - 1] > cfg.lateral_speed:
        start -= 1
    return start


def _decel_onsets(profile):
    lon = profile.longitudinal
    return [
        i for i, lab in enumerate(lon)
        if lab in DECELERATING and (i == 0 or lon[i - 1] not in DECELERATING)
    ]


def tag_reactive_scenarios(episode, cfg=None, profile=None):
    """Tag lead-vehicle, VRU, lane-change and cut-in moments with their keyframes."""
    cfg = cfg or DetectorConfig()
    ego = episode.ego
    if profile is None:
        profile = detect_meta_actions(ego, fit_controls(ego), cfg)
    poses = ego.waypoints
    n = len(poses)
    tags = []

    def keyed(tag, frame, buffered=True):
        kf = select_keyframe(frame, cfg.history_frames, cfg.buffer_s if buffered else 0.0)
        tags.append(ScenarioTag(tag, kf.frame, kf.clamped))

    lon = profile.longitudinal
    for onset in _decel_onsets(profile):
        lo = max(0, onset - cfg.vru_lookback_frames)
        vru = any(
            box.kind in ("pedestrian", "cyclist") and _in_corridor(box, poses[f], cfg)
            for f in range(lo, onset + 1) for box in episode.agents[f]
        )
        if vru:
            keyed("yield-to-vru", onset)
            continue
        lead = _lead_agent(episode.agents[onset], poses[onset], cfg)
        if lead is not None:
            stops = Longitudinal.Stop in lon[onset:]
            keyed("stop-for-lead" if stops else "slow-for-lead", onset)

    # lane change: lateral offset from the original lane center (the line
    # through the trajectory origin along its initial heading)
    offsets = np.array([_to_ego(p[0], p[1], ego.origin)[1] for p in poses])
    # a curve also builds lateral offset; a lane change ends up parallel to the lane
    heading = np.abs(wrap_angle(ego.yaw - ego.origin[2]))
    outside = np.abs(offsets) > cfg.lane_half_width
    parallel = outside & (heading <= cfg.lane_change_max_heading)
    run = 0
    for i in range(n):
        run = run + 1 if outside[i] else 0
        if run >= cfg.lane_change_sustain_frames and parallel[i]:
            cross = i - run + 1
            keyed("lane-change", _motion_start(offsets, cross, cfg, ego.dt))
            break

    # cut-in: a tracked agent that starts beside the corridor and later sits in it
    for track in agent_tracks(episode.agents).values():
        frames = sorted(track)
        if track[frames[0]].kind != "vehicle":
            continue
        lat = {}
        for f in frames:
            fwd, y = _relative(track[f], poses[f])
            lat[f] = (fwd, y)
        started_outside = abs(lat[frames[0]][1]) > cfg.lane_half_width
        if not started_outside:
            continue
        entry = next(
            (f for f in frames if abs(lat[f][1]) <= cfg.lane_half_width and lat[f][0] > 0), None
        )
        if entry is None:
            continue
        # walk back over the contiguous part of the track that ends at entry
        first = entry
        while first - 1 in track:
            first -= 1
        ys = np.array([lat[f][1] for f in range(first, entry + 1)])
        start = first + _motion_start(ys, entry - first, cfg, ego.dt)
        keyed("cut-in", start, buffered=False)

    tags.sort(key=lambda t: (t.keyframe, t.tag))
    return tags


def tag_proactive_scenarios(episode, cfg=None, profile=None):
    """Keyframe ranges for curvy-road and lane-change-preparation scenarios."""
    cfg = cfg or DetectorConfig()
    ego = episode.ego
    controls = fit_controls(ego)
    if profile is None:
        profile = detect_meta_actions(ego, controls, cfg)
    n = len(ego)
    ranges = []

    curving = np.abs(controls.curvature) >= cfg.kappa_steer
    onsets = _decel_onsets(profile)
    i = 0
    while i < n:
        if not curving[i]:
            i += 1
            continue
        j = i
        while j < n and curving[j]:
            j += 1
        if j - i >= cfg.curve_min_frames:
            start = i
            # braking for the curve shortly before entering it starts the range earlier
            pre = [o for o in onsets if i - 2 * cfg.history_frames <= o <= i]
            if pre:
                start = min(start, max(0, pre[-1] - cfg.buffer_frames))
            ranges.append(ScenarioRange("curvy-road", start, j - 1))
        i = j

    side = episode.meta.get("route_lane_change")
    if side in ("left", "right"):
        sign = 1.0 if side == "left" else -1.0
        poses = ego.waypoints
        w = cfg.lane_half_width

        def blocked(f):
            for box in episode.agents[f]:
                fwd, lat = _relative(box, poses[f])
                if abs(fwd) <= cfg.target_lane_window and w < sign * lat <= 3 * w:
                    return True
            return False

        flags = [blocked(f) for f in range(n)]
        if any(flags):
            start = flags.index(True)
            end = next((f - 1 for f in range(start, n) if not flags[f]), n - 1)
            ranges.append(ScenarioRange("lane-change-preparation", start, end))
    return ranges
