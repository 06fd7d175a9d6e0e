"""Oriented-box geometry: separating-axis overlap, box gaps and drivable-area tests."""

from dataclasses import dataclass, replace

import numpy as np
import shapely
from shapely.geometry import Polygon

from ._validation import ValidationError, check_finite

__all__ = [
    "OrientedBox",
    "boxes_overlap",
    "box_gap",
    "DrivablePolygon",
]


@dataclass(frozen=True)
class OrientedBox:
    x: float
    y: float
    heading: float
    length: float = 4.8
    width: float = 2.0
    kind: str = "vehicle"
    agent_id: str | None = None

    def __post_init__(self):
        check_finite([self.x, self.y, self.heading, self.length, self.width], "OrientedBox")
        if self.length <= 0 or self.width <= 0:
            raise ValidationError("box extents must be positive", field="OrientedBox")

    @property
    def center(self):
        return np.array([self.x, self.y])

    def axes(self):
        c, s = np.cos(self.heading), np.sin(self.heading)
        return np.array([[c, s], [-s, c]])

    def corners(self):
        fwd, left = self.axes()
        hl, hw = 0.5 * self.length, 0.5 * self.width
        ctr = self.center
        return np.array([
            ctr + hl * fwd + hw * left,
            ctr - hl * fwd + hw * left,
            ctr - hl * fwd - hw * left,
            ctr + hl * fwd - hw * left,
        ])

    def posed(self, x, y, heading):
        return replace(self, x=float(x), y=float(y), heading=float(heading))

    def transformed(self, rotation, translation):
        c, s = np.cos(rotation), np.sin(rotation)
        x = c * self.x - s * self.y + translation[0]
        y = s * self.x + c * self.y + translation[1]
        return replace(self, x=float(x), y=float(y), heading=float(self.heading + rotation))

    def to_dict(self):
        d = {"x": self.x, "y": self.y, "heading": self.heading,
             "length": self.length, "width": self.width, "kind": self.kind}
        if self.agent_id is not None:
            d["id"] = self.agent_id
        return d

    @classmethod
    def from_dict(cls, d):
        agent_id = d.get("id")
        return cls(d["x"], d["y"], d.get("heading", 0.0), d.get("length", 4.8),
                   d.get("width", 2.0), d.get("kind", d.get("class", "vehicle")),
                   None if agent_id is None else str(agent_id))


def _separation(a, b):
    """Largest gap between the two boxes' projections over the four candidate axes.

    Negative values mean every axis overlaps, i.e. the boxes intersect.
    """
    ca, cb = a.corners(), b.corners()
    best = -np.inf
    for axis in np.vstack([a.axes(), b.axes()]):
        pa, pb = ca @ axis, cb @ axis
        gap = max(pb.min() - pa.max(), pa.min() - pb.max())
        best = max(best, gap)
    return best


def boxes_overlap(a, b):
    """Separating-axis test; touching boxes count as overlapping."""
    return _separation(a, b) <= 0.0


def _segment_distance(p, q, r, s):
    def point_seg(pt, u, v):
        d = v - u
        t = np.clip(np.dot(pt - u, d) / np.dot(d, d), 0.0, 1.0)
        return np.linalg.norm(pt - (u + t * d))

    return min(point_seg(p, r, s), point_seg(q, r, s), point_seg(r, p, q), point_seg(s, p, q))


def box_gap(a, b):
    """Euclidean distance between two boxes; 0 when they overlap."""
    if boxes_overlap(a, b):
        return 0.0
    ca, cb = a.corners(), b.corners()
    best = np.inf
    for i in range(4):
        for j in range(4):
            best = min(best, _segment_distance(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4]))
    return float(best)


class DrivablePolygon:
    """Simple polygon of drivable area, in meters."""

    def __init__(self, vertices):
        vertices = check_finite(vertices, "drivable").reshape(-1, 2)
        if len(vertices) < 3:
            raise ValidationError("drivable polygon needs at least 3 vertices", field="drivable")
        poly = Polygon(vertices)
        if not poly.is_valid or poly.area <= 0:
            raise ValidationError(
                f"drivable polygon is not simple: {shapely.is_valid_reason(poly)}", field="drivable"
            )
        self.vertices = vertices
        self._poly = poly
        shapely.prepare(self._poly)

    def contains_box(self, box):
        return bool(self._poly.covers(Polygon(box.corners())))

    def contains_point(self, x, y):
        return bool(self._poly.covers(shapely.Point(x, y)))

    def transformed(self, rotation, translation):
        c, s = np.cos(rotation), np.sin(rotation)
        R = np.array([[c, -s], [s, c]])
        return DrivablePolygon(self.vertices @ R.T + np.asarray(translation, dtype=float))

    def to_list(self):
        return self.vertices.tolist()
