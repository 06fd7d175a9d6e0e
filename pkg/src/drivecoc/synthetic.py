"""Constructed driving scenes for tests, fixtures and demos.

Acceleration changes are jerk-limited ramps rather than steps, so that the
regularized control fit places onsets on the intended frame.
"""

import numpy as np

from ._validation import DT, HORIZON
from .dynamics import ControlSequence, EgoState, integrate_controls
from .episode import Episode
from .geometry import DrivablePolygon, OrientedBox


def ramp_profile(start, target, jerk=5.0, end=None, n=HORIZON, dt=DT):
    """Acceleration that ramps from 0 to ``target`` at ``start`` and back at ``end``."""
    a = np.zeros(n)
    step = jerk * dt
    for i in range(start, n if end is None else end):
        a[i] = np.sign(target) * min(abs(target), step * (i - start + 1))
    if end is not None:
        for i in range(end, n):
            a[i] = np.sign(target) * max(0.0, abs(a[i - 1]) - step)
    return a


def stop_profile(v0, start, decel=4.0, jerk=5.0, n=HORIZON, dt=DT):
    """Braking ramp from ``start`` that holds ``decel`` and ends at standstill."""
    a = ramp_profile(start, -decel, jerk, n=n, dt=dt)
    v = v0
    for i in range(n):
        if v + dt * a[i] < 0:
            a[i] = -v / dt
        v += dt * a[i]
    return a


def ego_trajectory(accel, kappa=None, v0=10.0, state=None):
    kappa = np.zeros_like(accel) if kappa is None else np.broadcast_to(kappa, np.shape(accel))
    ctrl = ControlSequence(np.column_stack([accel, kappa]))
    return integrate_controls(state or EgoState(v=v0), ctrl)


def road_polygon(length=400.0, half_width=10.0, behind=50.0):
    return DrivablePolygon([
        (-behind, -half_width), (length, -half_width), (length, half_width), (-behind, half_width)
    ])


def empty_episode(traj, meta=None, drivable=None):
    return Episode(traj, [[] for _ in range(len(traj))], drivable or road_polygon(), meta or {})


def stop_for_lead_episode(decel_start=28, v0=10.0, gap=15.0, decel=5.0):
    """Ego brakes to a stop behind a parked vehicle ``gap`` meters ahead of the onset."""
    traj = ego_trajectory(stop_profile(v0, decel_start, decel), v0=v0)
    x_onset = traj.waypoints[decel_start, 0]
    lead = OrientedBox(x_onset + gap, 0.0, 0.0, kind="vehicle", agent_id="lead")
    return Episode(traj, [[lead] for _ in range(len(traj))], road_polygon(), {"id": "stop-for-lead"})


def slow_for_lead_episode(decel_start=30, v0=12.0, lead_speed=6.0, gap=20.0):
    """Ego eases off behind a slower vehicle but never stops."""
    a = ramp_profile(decel_start, -1.0, end=decel_start + 20)
    traj = ego_trajectory(a, v0=v0)
    x_onset = traj.waypoints[decel_start, 0]
    agents = []
    for i in range(len(traj)):
        x = x_onset + gap + lead_speed * DT * (i - decel_start)
        agents.append([OrientedBox(x, 0.0, 0.0, agent_id="lead")])
    return Episode(traj, agents, road_polygon(), {"id": "slow-for-lead"})


def yield_to_vru_episode(decel_start=30, v0=8.0, decel=3.0):
    """A pedestrian crossing in front of the ego, which brakes for them."""
    traj = ego_trajectory(stop_profile(v0, decel_start, decel), v0=v0)
    x_ped = traj.waypoints[decel_start, 0] + 14.0
    agents = []
    for i in range(len(traj)):
        y = -3.0 + 1.2 * DT * i
        agents.append([OrientedBox(x_ped, y, np.pi / 2, 0.6, 0.6, kind="pedestrian", agent_id="ped")])
    return Episode(traj, agents, road_polygon(), {"id": "yield-to-vru"})


def cut_in_episode(move_start=30, v0=10.0, lateral_speed=1.0, lane_offset=3.5):
    """A vehicle in the adjacent lane moves into the ego lane from ``move_start``."""
    traj = ego_trajectory(np.zeros(HORIZON), v0=v0)
    agents = []
    for i in range(len(traj)):
        x = traj.waypoints[i, 0] + 12.0
        y = lane_offset - lateral_speed * DT * max(0, i - move_start)
        agents.append([OrientedBox(x, max(y, 0.0), 0.0, agent_id="contender")])
    return Episode(traj, agents, road_polygon(), {"id": "cut-in"})


def lane_change_episode(move_start=25, v0=10.0, kappa=0.02, side="left"):
    """S-shaped curvature pulse that moves the ego one lane over."""
    sign = 1.0 if side == "left" else -1.0
    k = np.zeros(HORIZON)
    k[move_start:move_start + 10] = sign * kappa
    k[move_start + 10:move_start + 20] = -sign * kappa
    traj = ego_trajectory(np.zeros(HORIZON), k, v0=v0)
    return empty_episode(traj, {"id": "lane-change"})


def curvy_road_episode(curve_start=20, curve_len=25, v0=10.0, kappa=0.04):
    k = np.zeros(HORIZON)
    k[curve_start:curve_start + curve_len] = kappa
    traj = ego_trajectory(np.zeros(HORIZON), k, v0=v0)
    return empty_episode(traj, {"id": "curvy-road"}, drivable=road_polygon(half_width=60.0))


def random_smooth_controls(rng, n=HORIZON, a_amp=2.0, k_amp=0.05):
    """Sum of two random low-frequency sinusoids per channel."""
    t = np.arange(n) * DT
    out = np.zeros((n, 2))
    for ch, amp in enumerate((a_amp, k_amp)):
        for _ in range(2):
            period = rng.uniform(2.0, 12.0)
            out[:, ch] += 0.5 * amp * rng.uniform(-1, 1) * np.sin(2 * np.pi * t / period + rng.uniform(0, 2 * np.pi))
    return ControlSequence(out)
