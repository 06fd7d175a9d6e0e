"""Episode container: recorded ego log, replayed agent boxes and drivable area."""

from dataclasses import dataclass, field

from ._validation import ValidationError
from .dynamics import Trajectory
from .geometry import DrivablePolygon, OrientedBox

AGENT_KINDS = ("vehicle", "pedestrian", "cyclist")


@dataclass
class Episode:
    ego: Trajectory
    agents: list
    drivable: DrivablePolygon
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.agents) != len(self.ego):
            raise ValidationError(
                f"agent replay has {len(self.agents)} frames, ego log has {len(self.ego)}",
                field="agents",
            )
        for i, frame in enumerate(self.agents):
            for box in frame:
                if box.kind not in AGENT_KINDS:
                    raise ValidationError(f"unknown agent class {box.kind!r}", field="agents", index=i)

    @property
    def id(self):
        return self.meta.get("id")

    def transformed(self, rotation, translation):
        return Episode(
            self.ego.transformed(rotation, translation),
            [[b.transformed(rotation, translation) for b in frame] for frame in self.agents],
            self.drivable.transformed(rotation, translation),
            dict(self.meta),
        )

    def to_dict(self):
        return {
            "v": 1,
            "meta": self.meta,
            "ego": self.ego.to_dict(),
            "agents": [[b.to_dict() for b in frame] for frame in self.agents],
            "drivable": self.drivable.to_list(),
        }

    @classmethod
    def from_dict(cls, d):
        agents = [[OrientedBox.from_dict(b) for b in frame] for frame in d["agents"]]
        return cls(Trajectory.from_dict(d["ego"]), agents, DrivablePolygon(d["drivable"]), d.get("meta", {}))


def agent_tracks(agents):
    """Group per-frame boxes into tracks keyed by ``agent_id`` or list position."""
    tracks = {}
    for frame_idx, frame in enumerate(agents):
        for slot, box in enumerate(frame):
            key = slot if box.agent_id is None else box.agent_id
            tracks.setdefault(key, {})[frame_idx] = box
    return tracks
