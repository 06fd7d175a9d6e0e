import numpy as np
import pytest
from hypothesis import given, strategies as st

from drivecoc._validation import ValidationError
from drivecoc.dynamics import EgoState, Trajectory, integrate_controls
from drivecoc.episode import Episode
from drivecoc.geometry import OrientedBox
from drivecoc.metrics import (
    ClosedLoopConfig,
    Event,
    EventLog,
    ade,
    alpasim_scores,
    comfort_fraction,
    min_ade,
    run_episode_metrics,
    token_budget,
)
from drivecoc.synthetic import ego_trajectory, empty_episode, random_smooth_controls, road_polygon

CRUISE = ego_trajectory(np.zeros(64), v0=10.0)


def offset(traj, dx, dy):
    ox, oy, oth = traj.origin
    return Trajectory(traj.waypoints + [dx, dy, 0.0], v0=traj.v0, origin=(ox + dx, oy + dy, oth))


def path_km(traj, upto):
    pts = np.vstack([[0.0, 0.0], traj.xy[:upto + 1]])
    return np.linalg.norm(np.diff(pts, axis=0), axis=1).sum() / 1000


# open loop

def test_ade_examples():
    assert ade(CRUISE, CRUISE) == 0.0
    assert ade(offset(CRUISE, 3.0, 4.0), CRUISE) == pytest.approx(5.0)
    wp = CRUISE.waypoints.copy()
    wp[-1, 1] += 6.4
    assert ade(Trajectory(wp, v0=10.0), CRUISE) == pytest.approx(0.1)


@given(st.integers(0, 2**32 - 1), st.floats(-np.pi, np.pi), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_ade_rigid_invariance(seed, rot, tx, ty):
    rng = np.random.default_rng(seed)
    a = integrate_controls(EgoState(v=5.0), random_smooth_controls(rng))
    b = integrate_controls(EgoState(v=6.0), random_smooth_controls(rng))
    moved = ade(a.transformed(rot, (tx, ty)), b.transformed(rot, (tx, ty)))
    assert moved == pytest.approx(ade(a, b), rel=1e-9, abs=1e-9)


def test_min_ade_examples():
    cands = [offset(CRUISE, 0.0, d) for d in (3.0, 1.0, 2.0)]
    assert min_ade(cands, CRUISE) == pytest.approx(1.0)
    assert min_ade(cands + [CRUISE], CRUISE) == 0.0
    assert min_ade(cands[:1], CRUISE) == ade(cands[0], CRUISE)
    with pytest.raises(ValidationError):
        min_ade([], CRUISE)
    with pytest.raises(ValidationError):
        min_ade(cands, CRUISE, horizon_s=4)


def test_min_ade_three_second_horizon():
    wp = CRUISE.waypoints.copy()
    wp[30:, 1] += 10.0
    late = Trajectory(wp, v0=10.0)
    assert min_ade([late], CRUISE, 3) == 0.0
    assert min_ade([late], CRUISE, 6) > 0.0


@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_min_ade_bounded_by_each_candidate(seed, k):
    rng = np.random.default_rng(seed)
    cands = [integrate_controls(EgoState(v=5.0), random_smooth_controls(rng)) for _ in range(k)]
    m = min_ade(cands, CRUISE)
    assert all(m <= ade(c, CRUISE) for c in cands)


def test_comfort_examples():
    parked = Trajectory(np.zeros((64, 3)))
    assert comfort_fraction([parked, parked]) == 1.0
    a = np.zeros(64)
    a[20:30] = 5.0
    harsh = ego_trajectory(a, v0=5.0)
    assert comfort_fraction([CRUISE, harsh], a_comfort=3.0) == 0.5
    assert comfort_fraction([CRUISE, harsh], a_comfort=np.inf) == 1.0


# closed loop

def test_quiet_episode():
    log = run_episode_metrics(empty_episode(CRUISE, {"id": "q"}), CRUISE)
    assert log.events == []
    assert log.km_driven == pytest.approx(path_km(CRUISE, 63))
    assert log.km_driven == pytest.approx(0.064)


def test_overlap_ends_episode():
    agents = [[] for _ in range(64)]
    agents[30] = [OrientedBox(*CRUISE.waypoints[30])]
    log = run_episode_metrics(Episode(CRUISE, agents, road_polygon(), {}), CRUISE)
    assert [(e.frame, e.kind, e.at_fault) for e in log.events] == [(30, "CloseEncounter", True)]
    assert log.km_driven == pytest.approx(path_km(CRUISE, 30))


def chaser_episode(agent_speed, start_gap):
    """A vehicle in the ego lane moving at ``agent_speed``; negative gap means it starts behind."""
    agents = []
    for i in range(64):
        x = start_gap + agent_speed * 0.1 * (i + 1)
        agents.append([OrientedBox(x, 0.0, 0.0, agent_id="other")])
    return Episode(CRUISE, agents, road_polygon(), {"id": "chase"})


def test_rear_end_is_not_at_fault():
    log = run_episode_metrics(chaser_episode(15.0, -10.0), CRUISE)
    (event,) = log.events
    assert event.kind == "CloseEncounter" and event.at_fault is False


def test_ego_hitting_slower_lead_is_at_fault():
    log = run_episode_metrics(chaser_episode(5.0, 10.0), CRUISE)
    (event,) = log.events
    assert event.kind == "CloseEncounter" and event.at_fault is True


def test_offroad():
    narrow = road_polygon(half_width=3.0)
    veer = ego_trajectory(np.zeros(64), np.r_[np.zeros(10), np.full(54, 0.02)], v0=10.0)
    log = run_episode_metrics(Episode(veer, [[] for _ in range(64)], narrow, {}), veer)
    (event,) = log.events
    assert event.kind == "Offroad" and not event.excluded
    ep = empty_episode(CRUISE, drivable=narrow)
    log = run_episode_metrics(ep, veer)
    assert log.events[0].kind == "Offroad"


def test_deviation_exclusion():
    narrow = road_polygon(half_width=8.0)
    ep = empty_episode(CRUISE, drivable=narrow)
    # recorded ego goes straight; policy slides sideways and leaves the road after > 4 m deviation
    veer = ego_trajectory(np.zeros(64), np.r_[np.zeros(5), np.full(59, 0.03)], v0=10.0)
    log = run_episode_metrics(ep, veer)
    (event,) = log.events
    assert event.excluded
    close = run_episode_metrics(ep, veer, ClosedLoopConfig(deviation_limit=100.0))
    assert not close.events[0].excluded


def test_offroad_agrees_with_point_oracle():
    rng = np.random.default_rng(0)
    poly = road_polygon(half_width=4.0)
    for _ in range(20):
        traj = integrate_controls(EgoState(v=8.0), random_smooth_controls(rng, k_amp=0.1))
        log = run_episode_metrics(empty_episode(traj, drivable=poly), traj)
        # oracle: first frame where any ego corner leaves the rectangle
        first = None
        for i, (x, y, yaw) in enumerate(traj.waypoints):
            corners = OrientedBox(x, y, yaw).corners()
            if np.any(np.abs(corners[:, 1]) > 4.0) or np.any(corners[:, 0] < -50) or np.any(corners[:, 0] > 400):
                first = i
                break
        assert [e.frame for e in log.events] == ([] if first is None else [first])


def test_wrong_horizon_is_rejected():
    # trajectories are fixed at 64 steps, so mismatches are caught at construction
    with pytest.raises(ValidationError):
        Trajectory(CRUISE.waypoints[:32], v0=10.0)
    with pytest.raises(ValidationError):
        ade(CRUISE.xy[:32], CRUISE)


def test_event_log_validation_and_round_trip():
    with pytest.raises(ValidationError):
        EventLog([Event(5, "Offroad"), Event(5, "CloseEncounter")])
    log = EventLog([Event(3, "CloseEncounter", False, True)], 0.25, "e1")
    assert EventLog.from_dict(log.to_dict()) == log


# aggregate scores

def logs_with(kinds, km_each):
    return [EventLog([Event(10, k[0], k[1])] if k else [], km_each) for k in kinds]


def test_alpasim_score_division():
    logs = logs_with([("Offroad", True)] * 4, 2.5)
    assert alpasim_scores(logs)["score_km"] == pytest.approx(2.5)
    logs = logs_with([None, ("Offroad", True), None, ("CloseEncounter", True), ("CloseEncounter", True),
                      ("Offroad", True)], 10 / 6)
    assert alpasim_scores(logs)["score_km"] == pytest.approx(2.5)


def test_zero_events_floor():
    s = alpasim_scores(logs_with([None, None], 3.0))
    assert s["score_km"] == 6.0 and s["score_at_fault_km"] == 6.0


def test_rear_end_only_affects_at_fault_score():
    logs = logs_with([("CloseEncounter", False), ("CloseEncounter", False), None], 2.0)
    s = alpasim_scores(logs)
    assert s["score_km"] == pytest.approx(3.0)
    assert s["score_at_fault_km"] == pytest.approx(6.0)
    assert s["close_encounter_rate"] == pytest.approx(2 / 3)


def test_excluded_events_drop_out_of_rates():
    logs = [EventLog([Event(10, "Offroad", True, True)], 1.0), EventLog([], 1.0)]
    s = alpasim_scores(logs)
    assert s["offroad_rate"] == 0.0 and s["score_km"] == 2.0


@given(st.lists(st.floats(0.01, 5.0), min_size=1, max_size=20))
def test_one_event_per_episode_is_mean_length(kms):
    logs = [EventLog([Event(1, "Offroad")], km) for km in kms]
    assert alpasim_scores(logs)["score_km"] == pytest.approx(np.mean(kms))


def test_empty_logs():
    with pytest.raises(ValidationError):
        alpasim_scores([])


# token budget

def test_token_budget_counts():
    assert token_budget("single", width=448, height=280) == {"total": 160, "per_image": 160.0}
    assert token_budget("triplane", sx=96, sy=96, sz=48, p=8)["total"] == 288
    assert token_budget("triplane", cameras=7, sx=96, sy=96, sz=48, p=8)["per_image"] == pytest.approx(41.142857, abs=1e-6)
    assert token_budget("flex", cameras=4, num_queries=100)["per_image"] == 25.0
    assert token_budget("single", cameras=2, width=448, height=280)["total"] == 320


def test_token_budget_errors():
    with pytest.raises(ValidationError):
        token_budget("single", width=0, height=280)
    with pytest.raises(ValidationError):
        token_budget("triplane", sx=96, sy=96, sz=47, p=8)
    with pytest.raises(ValidationError):
        token_budget("holo")
