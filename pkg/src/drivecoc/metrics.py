"""Open-loop displacement and comfort metrics, closed-loop episode events, token budgets."""

from dataclasses import dataclass, field

import numpy as np

from ._validation import ValidationError, wrap_angle
from .dynamics import FitConfig, fit_controls
from .episode import agent_tracks
from .geometry import OrientedBox, box_gap

__all__ = [
    "ade",
    "min_ade",
    "comfort_fraction",
    "ClosedLoopConfig",
    "Event",
    "EventLog",
    "run_episode_metrics",
    "alpasim_scores",
    "token_budget",
]

HORIZON_STEPS = {3: 30, 6: 64}


def _xy(traj):
    return traj.xy if hasattr(traj, "xy") else np.asarray(traj, dtype=float)[:, :2]


def ade(pred, gt, n=None):
    """Mean Euclidean distance between matching waypoints (optionally the first ``n``)."""
    p, g = _xy(pred), _xy(gt)
    if len(p) != len(g):
        raise ValidationError(
            f"prediction has {len(p)} waypoints, ground truth has {len(g)}",
            field="pred", expected=len(g), got=len(p),
        )
    if n is not None:
        p, g = p[:n], g[:n]
    return float(np.mean(np.linalg.norm(p - g, axis=1)))


def min_ade(preds, gt, horizon_s=6):
    if len(preds) == 0:
        raise ValidationError("min_ade needs at least one candidate", field="preds")
    if horizon_s not in HORIZON_STEPS:
        raise ValidationError(f"horizon_s must be one of {sorted(HORIZON_STEPS)}", field="horizon_s")
    n = HORIZON_STEPS[horizon_s]
    return min(ade(p, gt, n) for p in preds)


def comfort_fraction(trajs, a_comfort=3.0, fit_cfg=None):
    """Share of trajectories whose fitted acceleration stays within ``a_comfort`` everywhere."""
    trajs = list(trajs)
    if not trajs:
        raise ValidationError("comfort_fraction needs at least one trajectory", field="trajs")
    ok = [np.all(np.abs(fit_controls(t, fit_cfg or FitConfig()).accel) <= a_comfort) for t in trajs]
    return float(np.mean(ok))


@dataclass(frozen=True)
class ClosedLoopConfig:
    d_ce: float = 0.5
    deviation_limit: float = 4.0
    rear_sector_deg: float = 60.0
    ego_length: float = 4.8
    ego_width: float = 2.0

    def __post_init__(self):
        if self.d_ce < 0 or self.deviation_limit <= 0:
            raise ValidationError("d_ce must be >= 0 and deviation_limit > 0", field="d_ce")


@dataclass
class Event:
    frame: int
    kind: str
    at_fault: bool = True
    excluded: bool = False

    def to_dict(self):
        return {"frame": self.frame, "kind": self.kind, "at_fault": self.at_fault, "excluded": self.excluded}


@dataclass
class EventLog:
    events: list = field(default_factory=list)
    km_driven: float = 0.0
    episode_id: str | None = None

    def __post_init__(self):
        frames = [e.frame for e in self.events]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValidationError("event frames must be strictly increasing", field="events")

    def counted(self):
        return [e for e in self.events if not e.excluded]

    def to_dict(self):
        return {"id": self.episode_id, "events": [e.to_dict() for e in self.events], "km_driven": self.km_driven}

    @classmethod
    def from_dict(cls, d):
        return cls([Event(**e) for e in d.get("events", [])], float(d["km_driven"]), d.get("id"))


def _path_km(traj, upto):
    pts = np.vstack([np.asarray(traj.origin[:2]), traj.xy[:upto + 1]])
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)) / 1000.0)


def _velocity(positions, i, dt):
    if len(positions) < 2:
        return np.zeros(2)
    j = max(i, 1)
    return (positions[j] - positions[j - 1]) / dt


def _is_rear_end(ego_pose, ego_vel, agent_pos, agent_vel, cfg):
    """Contender behind the ego (within the rear sector) and closing in."""
    rel = agent_pos - ego_pose[:2]
    bearing = np.arctan2(rel[1], rel[0])
    off_back = abs(float(wrap_angle(bearing - (ego_pose[2] + np.pi))))
    dist = np.linalg.norm(rel)
    if dist == 0:
        return False
    closing = -np.dot(rel, agent_vel - ego_vel) / dist
    return off_back <= np.radians(cfg.rear_sector_deg) and closing > 0


def run_episode_metrics(episode, policy_traj, cfg=None):
    """Replay the episode with the ego following ``policy_traj`` and log the first event.

    The run ends at the first off-road or close-encounter frame. Rear-end
    encounters are not the ego's fault, and events reached after the ego has
    strayed more than ``deviation_limit`` meters from its recorded path are
    excluded from scoring.
    """
    cfg = cfg or ClosedLoopConfig()
    n = len(episode.ego)
    if len(policy_traj) != n:
        raise ValidationError(
            f"policy trajectory has {len(policy_traj)} frames, episode has {n}",
            field="policy", expected=n, got=len(policy_traj),
        )
    template = OrientedBox(0.0, 0.0, 0.0, cfg.ego_length, cfg.ego_width)
    dt = policy_traj.dt
    tracks = agent_tracks(episode.agents)
    track_of = {}
    for key, track in tracks.items():
        for f, box in track.items():
            track_of[(f, id(box))] = key
    deviation = np.linalg.norm(policy_traj.xy - episode.ego.xy, axis=1)
    ego_pts = np.vstack([np.asarray(policy_traj.origin[:2]), policy_traj.xy])

    events = []
    terminal = n - 1
    for i in range(n):
        pose = policy_traj.waypoints[i]
        ego = template.posed(*pose)
        kind, at_fault = None, True
        if not episode.drivable.contains_box(ego):
            kind = "Offroad"
        else:
            for box in episode.agents[i]:
                if box_gap(ego, box) < cfg.d_ce:
                    kind = "CloseEncounter"
                    track = tracks[track_of[(i, id(box))]]
                    frames = sorted(f for f in track if f <= i)
                    pos = np.array([track[f].center for f in frames])
                    agent_vel = _velocity(pos, len(pos) - 1, dt) if len(frames) > 1 else np.zeros(2)
                    ego_vel = (ego_pts[i + 1] - ego_pts[i]) / dt
                    at_fault = not _is_rear_end(pose, ego_vel, box.center, agent_vel, cfg)
                    break
        if kind is not None:
            excluded = bool(deviation[:i + 1].max() > cfg.deviation_limit)
            events.append(Event(i, kind, at_fault, excluded))
            terminal = i
            break
    return EventLog(events, _path_km(episode.ego, terminal), episode.id)


def alpasim_scores(logs):
    """Per-episode event rates and kilometers per counted event."""
    logs = list(logs)
    if not logs:
        raise ValidationError("alpasim_scores needs at least one episode log", field="logs")
    total_km = sum(log.km_driven for log in logs)
    counted = [log.counted() for log in logs]
    n_off = sum(any(e.kind == "Offroad" for e in ev) for ev in counted)
    n_ce = sum(any(e.kind == "CloseEncounter" for e in ev) for ev in counted)
    n_events = sum(len(ev) for ev in counted)
    n_fault = sum(1 for ev in counted for e in ev if e.kind == "Offroad" or e.at_fault)
    return {
        "offroad_rate": n_off / len(logs),
        "close_encounter_rate": n_ce / len(logs),
        "score_km": total_km / max(1, n_events),
        "score_at_fault_km": total_km / max(1, n_fault),
    }


def _positive(**kw):
    for k, v in kw.items():
        if v is None or v <= 0:
            raise ValidationError(f"{k} must be positive", field=k, value=v)


def token_budget(mode, cameras=1, **params):
    """Vision token counts for one timestep.

    ``single``: W x H images, 14 px patches downsampled 2x, so (W/28)(H/28)
    tokens per image. ``triplane``: patches of the xy, xz and yz planes of an
    S_x x S_y x S_z grid with patch sizes p_x, p_y, p_z. ``flex``: a fixed
    number of query tokens. Returns ``{"total", "per_image"}``.
    """
    _positive(cameras=cameras)
    if mode == "single":
        W, H = params.get("width"), params.get("height")
        _positive(width=W, height=H)
        if W % 28 or H % 28:
            raise ValidationError("image sides must be multiples of 28 px", field="width", value=[W, H])
        per = (W // 28) * (H // 28)
        return {"total": per * cameras, "per_image": float(per)}
    if mode == "triplane":
        sx, sy, sz = params.get("sx"), params.get("sy"), params.get("sz")
        p = params.get("p")
        px, py, pz = params.get("px", p), params.get("py", p), params.get("pz", p)
        _positive(sx=sx, sy=sy, sz=sz, px=px, py=py, pz=pz)
        for s, q, name in ((sx, px, "sx"), (sy, py, "sy"), (sz, pz, "sz")):
            if (s - q) % q:
                raise ValidationError(f"{name} - p must be divisible by p", field=name, value=[s, q])
        nx, ny, nz = (sx - px) // px + 1, (sy - py) // py + 1, (sz - pz) // pz + 1
        total = nx * ny + nx * nz + ny * nz
        return {"total": total, "per_image": total / cameras}
    if mode == "flex":
        q = params.get("num_queries")
        _positive(num_queries=q)
        return {"total": q, "per_image": q / cameras}
    raise ValidationError(f"unknown token-budget mode {mode!r}", field="mode")
