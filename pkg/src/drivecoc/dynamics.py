"""Unicycle trajectory types, exact forward integration and regularized control fitting.

Trajectories hold 64 future waypoints at 10 Hz in the ego frame. Controls are
(acceleration, curvature) pairs, one per step. ``integrate_controls`` maps
controls to waypoints with the trapezoidal position update; ``fit_controls``
inverts it with a second-difference ridge penalty so that sensor noise in the
waypoints does not turn into high-frequency control noise.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    DT,
    HORIZON,
    ValidationError,
    check_controls_array,
    check_dt,
    check_finite,
    check_horizon,
    check_trajectory_array,
    wrap_angle,
)

__all__ = [
    "EgoState",
    "Waypoint",
    "Trajectory",
    "ControlSequence",
    "FitConfig",
    "integrate_controls",
    "fit_controls",
    "jerk_profile",
    "second_difference_matrix",
    "ridge_smooth",
    "ControlFitter",
]


@dataclass(frozen=True)
class EgoState:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0
    v: float = 0.0

    def __post_init__(self):
        check_finite([self.x, self.y, self.theta, self.v], "EgoState")
        object.__setattr__(self, "theta", float(wrap_angle(self.theta)))


class Waypoint(NamedTuple):
    x: float
    y: float
    yaw: float


@dataclass(frozen=True)
class FitConfig:
    tikhonov_lambda: float = 1.0
    v_epsilon: float = 0.05
    a_bound: float = 10.0
    kappa_bound: float = 0.2

    def __post_init__(self):
        if not self.tikhonov_lambda >= 0:
            raise ValidationError("tikhonov_lambda must be >= 0", field="tikhonov_lambda")
        for name in ("v_epsilon", "a_bound", "kappa_bound"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0", field=name)


@dataclass(eq=False)
class Trajectory:
    """64 waypoints ``(x, y, yaw)`` plus the speed at the current time.

    ``origin`` is the pose the waypoints are measured from; it is the identity
    pose for ego-frame trajectories and only changes under rigid transforms.
    """

    waypoints: np.ndarray
    v0: float = 0.0
    dt: float = DT
    reverse: bool = False
    origin: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        wp = check_finite(self.waypoints, "waypoints").reshape(-1, 3)
        check_horizon(len(wp), name="waypoints")
        wp = wp.copy()
        wp[:, 2] = wrap_angle(wp[:, 2])
        self.waypoints = wp
        self.v0 = float(check_finite(self.v0, "v0"))
        if self.v0 < 0 and not self.reverse:
            raise ValidationError("negative v0 requires reverse=True", field="v0", value=self.v0)
        if abs(check_dt(self.dt) - DT) > 1e-12:
            raise ValidationError("trajectories are sampled at dt = 0.1 s", field="dt", value=self.dt)
        self.origin = tuple(float(o) for o in check_finite(self.origin, "origin"))

    def __len__(self):
        return len(self.waypoints)

    def __iter__(self):
        return (Waypoint(*map(float, row)) for row in self.waypoints)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            np.array_equal(self.waypoints, other.waypoints)
            and self.v0 == other.v0
            and self.dt == other.dt
            and self.reverse == other.reverse
            and self.origin == other.origin
        )

    @property
    def xy(self):
        return self.waypoints[:, :2]

    @property
    def yaw(self):
        return self.waypoints[:, 2]

    def initial_state(self):
        x0, y0, th0 = self.origin
        return EgoState(x0, y0, th0, self.v0)

    def transformed(self, rotation, translation):
        """Apply the rigid transform ``p -> R(rotation) p + translation``."""
        c, s = np.cos(rotation), np.sin(rotation)
        R = np.array([[c, -s], [s, c]])
        t = np.asarray(translation, dtype=float)
        wp = self.waypoints.copy()
        wp[:, :2] = wp[:, :2] @ R.T + t
        wp[:, 2] = wp[:, 2] + rotation
        ox, oy, oth = self.origin
        o_xy = R @ np.array([ox, oy]) + t
        return Trajectory(wp, self.v0, self.dt, self.reverse, (o_xy[0], o_xy[1], float(wrap_angle(oth + rotation))))

    def to_row(self):
        return np.concatenate([[self.v0], self.waypoints.ravel()])

    @classmethod
    def from_row(cls, row, **kwargs):
        row = np.asarray(row, dtype=float)
        return cls(row[1:].reshape(HORIZON, 3), v0=row[0], reverse=row[0] < 0, **kwargs)

    def to_dict(self):
        d = {"dt": self.dt, "v0": self.v0, "waypoints": self.waypoints.tolist()}
        if self.reverse:
            d["reverse"] = True
        if any(self.origin):
            d["origin"] = list(self.origin)
        return d

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"dt", "v0", "waypoints", "reverse", "origin", "v"}
        if unknown:
            raise ValidationError(f"unknown trajectory keys: {sorted(unknown)}", field="trajectory")
        return cls(
            np.asarray(d["waypoints"], dtype=float),
            v0=d.get("v0", 0.0),
            dt=d.get("dt", DT),
            reverse=d.get("reverse", False),
            origin=tuple(d.get("origin", (0.0, 0.0, 0.0))),
        )


@dataclass(eq=False)
class ControlSequence:
    """64 ``(acceleration, curvature)`` pairs; curvature is positive to the left."""

    controls: np.ndarray
    dt: float = DT

    def __post_init__(self):
        u = check_finite(self.controls, "controls").reshape(-1, 2)
        check_horizon(len(u), name="controls")
        self.controls = u.copy()
        self.dt = check_dt(self.dt)

    def __len__(self):
        return len(self.controls)

    def __eq__(self, other):
        if not isinstance(other, ControlSequence):
            return NotImplemented
        return np.array_equal(self.controls, other.controls) and self.dt == other.dt

    @property
    def accel(self):
        return self.controls[:, 0]

    @property
    def curvature(self):
        return self.controls[:, 1]

    def check_bounds(self, a_bound, kappa_bound):
        for channel, values, bound in (("a", self.accel, a_bound), ("kappa", self.curvature, kappa_bound)):
            over = np.flatnonzero(np.abs(values) > bound * (1 + 1e-12))
            if over.size:
                i = int(over[0])
                raise ValidationError(
                    f"control {channel}[{i}] = {values[i]:g} exceeds bound {bound:g}",
                    index=i, channel=channel, value=float(values[i]), bound=bound,
                )
        return self

    def to_row(self):
        """Interleaved ``[a1, k1, a2, k2, ...]``."""
        return self.controls.ravel().copy()

    @classmethod
    def from_row(cls, row, dt=DT):
        return cls(np.asarray(row, dtype=float).reshape(HORIZON, 2), dt=dt)

    def to_dict(self):
        return {"dt": self.dt, "controls": self.controls.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["controls"], dtype=float), dt=d.get("dt", DT))


def integrate_controls(initial, controls, cfg=None):
    """Roll the unicycle model forward from ``initial``.

    Speed is updated first, heading with the exact constant-control increment
    ``dt*k*v + dt**2/2*k*a``, and position with the trapezoid of the old and
    new velocity vectors. Returns the 64 post-step states as a Trajectory.
    """
    cfg = cfg or FitConfig()
    if not isinstance(initial, EgoState):
        initial = EgoState(*initial)
    controls.check_bounds(cfg.a_bound, cfg.kappa_bound)
    dt = controls.dt
    n = len(controls)
    out = np.empty((n, 3))
    x, y, th, v = initial.x, initial.y, initial.theta, initial.v
    for i, (a, k) in enumerate(controls.controls):
        v_next = v + dt * a
        th_next = th + dt * k * v + 0.5 * dt * dt * k * a
        x = x + 0.5 * dt * (v * np.cos(th) + v_next * np.cos(th_next))
        y = y + 0.5 * dt * (v * np.sin(th) + v_next * np.sin(th_next))
        th, v = th_next, v_next
        out[i] = (x, y, th)
    return Trajectory(
        out,
        v0=initial.v,
        dt=dt,
        reverse=initial.v < 0,
        origin=(initial.x, initial.y, initial.theta),
    )


def second_difference_matrix(n):
    return np.diff(np.eye(n), 2, axis=0)


def ridge_smooth(raw, lam):
    """Solve ``min ||u - raw||^2 + lam ||D2 u||^2`` for each column of ``raw``.

    The normal matrix annihilates constants and ramps, so the sum and first
    moment of each channel are preserved.
    """
    raw = np.asarray(raw, dtype=float)
    if lam == 0:
        return raw.copy()
    D = second_difference_matrix(len(raw))
    return np.linalg.solve(np.eye(len(raw)) + lam * D.T @ D, raw)


def _local_frame(traj):
    x0, y0, th0 = traj.origin
    c, s = np.cos(th0), np.sin(th0)
    rel = traj.xy - (x0, y0)
    xy = np.column_stack([c * rel[:, 0] + s * rel[:, 1], -s * rel[:, 0] + c * rel[:, 1]])
    return xy, traj.yaw - th0


def _solve_speeds(xy, theta, v0, dt, lam):
    """Least-squares speeds from trapezoidal position increments.

    ``theta`` includes the initial heading (length n+1). The ridge term on
    second differences of speed keeps the alternating null mode of the
    trapezoid system from random-walking under position noise.
    """
    n = len(xy)
    pts = np.vstack([[0.0, 0.0], xy])
    dpos = np.diff(pts, axis=0)
    c, s = np.cos(theta), np.sin(theta)
    A = np.zeros((2 * n, n))
    b = np.empty(2 * n)
    h = 0.5 * dt
    for i in range(n):
        # unknown v_{i+1} sits in column i; v_0 is known
        A[2 * i, i] = h * c[i + 1]
        A[2 * i + 1, i] = h * s[i + 1]
        if i > 0:
            A[2 * i, i - 1] = h * c[i]
            A[2 * i + 1, i - 1] = h * s[i]
        b[2 * i] = dpos[i, 0] - (h * c[0] * v0 if i == 0 else 0.0)
        b[2 * i + 1] = dpos[i, 1] - (h * s[0] * v0 if i == 0 else 0.0)
    if lam > 0:
        # penalize second differences of [v0, v1..vn]; v0 is moved to the rhs
        D = second_difference_matrix(n + 1) * np.sqrt(lam) * dt
        A = np.vstack([A, D[:, 1:]])
        b = np.concatenate([b, -D[:, 0] * v0])
    v, *_ = np.linalg.lstsq(A, b, rcond=None)
    return np.concatenate([[v0], v])


def fit_controls(traj, cfg=None):
    """Recover the control sequence that best reproduces ``traj``.

    Headings come from the waypoint yaws, speeds from a least-squares fit of
    the trapezoidal position increments, and the raw per-step inversion of the
    dynamics is then smoothed channel-wise with a second-difference ridge
    penalty of weight ``cfg.tikhonov_lambda`` and clamped to the bounds.
    """
    cfg = cfg or FitConfig()
    dt = traj.dt
    xy, yaw = _local_frame(traj)
    theta = np.unwrap(np.concatenate([[0.0], yaw]))
    n = len(xy)
    if not np.any(np.abs(xy) > 0) and traj.v0 == 0 and not np.any(theta):
        return ControlSequence(np.zeros((n, 2)), dt=dt)

    v = _solve_speeds(xy, theta, traj.v0, dt, cfg.tikhonov_lambda)
    a_raw = np.diff(v) / dt
    dtheta = np.diff(theta)
    denom = dt * v[:-1] + 0.5 * dt * dt * a_raw
    k_raw = np.empty(n)
    prev = 0.0
    for i in range(n):
        # curvature is unobservable when the ego barely moves during the step
        if abs(denom[i]) < cfg.v_epsilon * dt:
            k_raw[i] = prev
        else:
            k_raw[i] = dtheta[i] / denom[i]
        prev = k_raw[i]

    smooth = ridge_smooth(np.column_stack([a_raw, k_raw]), cfg.tikhonov_lambda)
    smooth[:, 0] = np.clip(smooth[:, 0], -cfg.a_bound, cfg.a_bound)
    smooth[:, 1] = np.clip(smooth[:, 1], -cfg.kappa_bound, cfg.kappa_bound)
    return ControlSequence(smooth, dt=dt)


def jerk_profile(controls):
    """Forward-difference jerk ``(a[i+1] - a[i]) / dt``; 63 values for 64 controls."""
    return np.diff(controls.accel) / controls.dt


class ControlFitter(TransformerMixin, BaseEstimator):
    """Transformer from flattened trajectories to flattened controls.

    Rows of ``X`` are ``[v0, x1, y1, yaw1, ..., x64, y64, yaw64]``; output rows
    are interleaved ``[a1, k1, ..., a64, k64]``, which is the layout
    :class:`drivecoc.codec.ActionTokenizer` consumes.
    """

    def __init__(self, tikhonov_lambda=1.0, v_epsilon=0.05, a_bound=10.0, kappa_bound=0.2):
        self.tikhonov_lambda = tikhonov_lambda
        self.v_epsilon = v_epsilon
        self.a_bound = a_bound
        self.kappa_bound = kappa_bound

    def _config(self):
        return FitConfig(self.tikhonov_lambda, self.v_epsilon, self.a_bound, self.kappa_bound)

    def fit(self, X, y=None):
        X = check_trajectory_array(X)
        self._config()
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_trajectory_array(X)
        cfg = self._config()
        return np.vstack([fit_controls(Trajectory.from_row(row), cfg).to_row() for row in X])

    def reconstruct(self, U, v0):
        """Integrate control rows back to trajectory rows, starting at speed ``v0``."""
        U = check_controls_array(U)
        v0 = np.broadcast_to(np.asarray(v0, dtype=float), (len(U),))
        cfg = self._config()
        rows = [
            integrate_controls(EgoState(v=s), ControlSequence.from_row(u), cfg).to_row()
            for u, s in zip(U, v0)
        ]
        return np.vstack(rows)
