import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crossroads.config import RunConfig
from crossroads.env import TrajectoryLog
from crossroads.metrics import (
    METRIC_NAMES,
    EpisodeMetrics,
    MetricsError,
    aggregate,
    compute_episode_metrics,
    evaluate,
)

# reference indicator labels, written out by hand rather than imported
REFERENCE_LABELS = [
    "success", "out_of_road", "crash_vehicle", "velocity_mean", "velocity_mean_in_conflict_zone",
    "acceleration", "acceleration_in_conflict_zone", "arrive_steps", "episode_steps",
    "mean_conflict_zone_num", "max_conflict_zone_num", "conflict_zone_when_crash", "front_end_distance",
    "limited_lidar", "limited_lidar_in_conflict_zone", "front_end_distance_in_conflict_zone", "pair_distance",
]


def rec(step, agent, x=0.0, y=0.0, speed=0.0, prev=0.0, zone=False, contact=False, onset=False, off=False,
        arrived=False, lidar=None, front=None):
    return {"kind": "step", "episode": 0, "step": step, "agent": agent, "x": x, "y": y, "heading": 0.0,
            "speed": speed, "prev_speed": prev, "route_progress": 0.0, "steer": 0.0, "throttle": 0.0,
            "in_contact": contact, "off_road": off, "arrived": arrived, "crash_onset": onset,
            "in_conflict_zone": zone, "lidar_mean": lidar, "lidar_front_min": front, "reward": {}, "done": arrived}


def make_log(records, n, max_steps, episode_steps, dt):
    meta = {"kind": "meta", "episode": 0, "seed": 0, "dt": dt, "max_steps": max_steps, "n_vehicles": n,
            "arm_length": 30.0, "lane_width": 3.5, "lanes_per_arm": 2}
    end = {"kind": "end", "episode": 0, "episode_steps": episode_steps,
           "n_arrived": sum(1 for r in records if r["arrived"])}
    return TrajectoryLog([meta, *records, end])


# Log 1: two arrivals (steps 2 and 3), scans and zone visits, no contacts
LOG1 = make_log([
    rec(1, 0, 0, 0, speed=2, prev=0, lidar=0.5, front=0.25),
    rec(1, 1, 3, 4, speed=4, prev=2, zone=True, lidar=0.75, front=0.25),
    rec(2, 0, 1, 0, speed=2, prev=2, arrived=True),
    rec(2, 1, 3, 0, speed=6, prev=4, zone=True, lidar=0.25, front=0.625),
    rec(3, 1, 6, 0, speed=6, prev=6, arrived=True),
], n=2, max_steps=10, episode_steps=3, dt=0.5)
EXPECTED1 = dict(
    success=2.0, out_of_road=0.0, crash_vehicle=0.0,
    velocity_mean=(2 + 4 + 2 + 6 + 6) / 5, velocity_mean_in_conflict_zone=(4 + 6) / 2,
    acceleration=(4 + 4 + 0 + 4 + 0) / 5, acceleration_in_conflict_zone=(4 + 4) / 2,
    arrive_steps=(2 + 3) / 2, episode_steps=3.0,
    mean_conflict_zone_num=(1 + 1 + 0) / 3, max_conflict_zone_num=1.0, conflict_zone_when_crash=0.0,
    front_end_distance=(0.25 + 0.25 + 0.625) / 3, limited_lidar=(0.5 + 0.75 + 0.25) / 3,
    limited_lidar_in_conflict_zone=(0.75 + 0.25) / 2, front_end_distance_in_conflict_zone=(0.25 + 0.625) / 2,
    pair_distance=5.0,
)

# Log 2: overlapping contacts between three parked vehicles, no scans
LOG2 = make_log([
    *[rec(t, 0, 0, 0, speed=1, prev=0 if t == 1 else 1, zone=True, contact=t in (2, 3), onset=t == 2)
      for t in range(1, 5)],
    *[rec(t, 1, 3, 4, zone=t >= 2, contact=t >= 2, onset=t in (2, 4)) for t in range(1, 5)],
    *[rec(t, 2, 6, 8, zone=t == 4, contact=t == 4, onset=t == 4, off=t <= 2) for t in range(1, 5)],
], n=3, max_steps=4, episode_steps=4, dt=0.5)
EXPECTED2 = dict(
    success=0.0, out_of_road=2.0, crash_vehicle=6.0,
    velocity_mean=4 / 12, velocity_mean_in_conflict_zone=4 / 8,
    acceleration=2 / 12, acceleration_in_conflict_zone=2 / 8,
    arrive_steps=4.0, episode_steps=4.0,
    mean_conflict_zone_num=(1 + 2 + 2 + 3) / 4, max_conflict_zone_num=3.0, conflict_zone_when_crash=(2 + 3) / 2,
    front_end_distance=0.0, limited_lidar=0.0, limited_lidar_in_conflict_zone=0.0,
    front_end_distance_in_conflict_zone=0.0,
    pair_distance=4 * (5 + 10 + 5) / 12,
)

# Log 3: arrivals drop out of pair distances; zone occupancy averaged over idle trailing steps
LOG3 = make_log([
    rec(1, 0, 0, 0, speed=4, prev=4, zone=True, lidar=1.0, front=1.0),
    rec(2, 0, 0, 60, speed=4, prev=4, arrived=True),
    rec(1, 1, 0, 3, speed=2, prev=4, zone=True, lidar=0.5, front=0.25),
    rec(2, 1, 0, 4, speed=2, prev=2, lidar=0.5, front=0.25),
    rec(3, 1, 0, 5, speed=0, prev=2, lidar=0.5, front=0.25),
    rec(4, 1, 0, 5, lidar=0.5, front=0.25),
    rec(5, 1, 0, 5, lidar=0.5, front=0.25),
    rec(1, 2, 4, 0, speed=1, prev=0, lidar=0.75, front=0.5),
    rec(2, 2, 3, 0, speed=1, prev=1, off=True, lidar=0.75, front=0.5),
    rec(3, 2, 8, 8, speed=1, prev=1, arrived=True),
], n=3, max_steps=10, episode_steps=5, dt=0.25)
EXPECTED3 = dict(
    success=2.0, out_of_road=1.0, crash_vehicle=0.0,
    velocity_mean=15 / 10, velocity_mean_in_conflict_zone=(4 + 2) / 2,
    acceleration=(8 + 8 + 4) / 10, acceleration_in_conflict_zone=(0 + 8) / 2,
    arrive_steps=(2 + 3) / 2, episode_steps=5.0,
    mean_conflict_zone_num=2 / 5, max_conflict_zone_num=2.0, conflict_zone_when_crash=0.0,
    front_end_distance=(1.0 + 5 * 0.25 + 2 * 0.5) / 8, limited_lidar=(1.0 + 5 * 0.5 + 2 * 0.75) / 8,
    limited_lidar_in_conflict_zone=(1.0 + 0.5) / 2, front_end_distance_in_conflict_zone=(1.0 + 0.25) / 2,
    pair_distance=(3 + 4 + 5 + 5) / 4,
)

# Log 4: an episode that ended before any step
LOG4 = make_log([], n=1, max_steps=7, episode_steps=0, dt=0.1)
EXPECTED4 = {**{k: 0.0 for k in REFERENCE_LABELS}, "arrive_steps": 7.0}

# Log 5: a sustained two-vehicle contact with a single onset step
LOG5 = make_log([
    rec(1, 0, 0, 0, speed=1, prev=0, zone=True, contact=True, onset=True, lidar=0.125, front=0.125),
    rec(2, 0, 1, 0, speed=1, prev=1, zone=True, contact=True, lidar=0.125, front=0.125),
    rec(3, 0, 2, 0, speed=0, prev=1, contact=True, lidar=0.125, front=0.125),
    rec(1, 1, 0, 1, speed=1, prev=2, zone=True, contact=True, onset=True, lidar=0.25, front=0.0),
    rec(2, 1, 1, 2, speed=3, prev=1, contact=True, lidar=0.25, front=0.0),
    rec(3, 1, 2, 3, speed=3, prev=3, contact=True, off=True, lidar=0.25, front=0.0),
], n=2, max_steps=3, episode_steps=3, dt=1.0)
EXPECTED5 = dict(
    success=0.0, out_of_road=1.0, crash_vehicle=6.0,
    velocity_mean=9 / 6, velocity_mean_in_conflict_zone=3 / 3,
    acceleration=5 / 6, acceleration_in_conflict_zone=2 / 3,
    arrive_steps=3.0, episode_steps=3.0,
    mean_conflict_zone_num=(2 + 1 + 0) / 3, max_conflict_zone_num=2.0, conflict_zone_when_crash=2.0,
    front_end_distance=0.375 / 6, limited_lidar=1.125 / 6,
    limited_lidar_in_conflict_zone=0.5 / 3, front_end_distance_in_conflict_zone=0.25 / 3,
    pair_distance=(1 + 2 + 3) / 3,
)

CASES = [(LOG1, EXPECTED1), (LOG2, EXPECTED2), (LOG3, EXPECTED3), (LOG4, EXPECTED4), (LOG5, EXPECTED5)]


@pytest.mark.parametrize("log,expected", CASES, ids=[f"log{k}" for k in range(1, 6)])
def test_hand_computed_logs(log, expected):
    assert sorted(expected) == sorted(REFERENCE_LABELS)
    assert compute_episode_metrics(log).as_dict() == expected


def test_every_field_is_exercised_by_some_log():
    for name in REFERENCE_LABELS:
        assert any(exp[name] != 0.0 for _, exp in CASES), name


def test_metric_names_match_reference_labels():
    assert list(METRIC_NAMES) == REFERENCE_LABELS


def test_csv_rows_use_reference_labels(tmp_path):
    report = aggregate([compute_episode_metrics(LOG1)])
    with open(report.write_csv(tmp_path / "m.csv")) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["metric", "value"]
    assert [r[0] for r in rows[1:]] == REFERENCE_LABELS
    assert float(rows[1][1]) == 2.0


def test_one_vehicle_in_contact_three_steps():
    recs = [rec(t, 0, contact=t <= 3, onset=t == 1) for t in range(1, 6)]
    assert compute_episode_metrics(make_log(recs, 1, 5, 5, 0.1)).crash_vehicle == 3.0


def test_purity():
    a = compute_episode_metrics(LOG3)
    b = compute_episode_metrics(TrajectoryLog.loads(LOG3.dumps()))
    assert a == b


@settings(max_examples=100, deadline=None)
@given(pick=st.integers(0, 10_000))
def test_adding_contact_step_increments_crash_only(pick):
    base = LOG3
    steps = [r for r in base.records if r.get("kind") == "step" and not r["in_contact"]]
    target = steps[pick % len(steps)]
    records = [dict(r, in_contact=True) if r is target else r for r in base.records]
    before, after = compute_episode_metrics(base), compute_episode_metrics(TrajectoryLog(records))
    assert after.crash_vehicle == before.crash_vehicle + 1
    for name in ("success", "arrive_steps", "episode_steps"):
        assert getattr(after, name) == getattr(before, name)


@settings(max_examples=150, deadline=None)
@given(
    n=st.integers(1, 4),
    max_steps=st.integers(1, 6),
    data=st.data(),
)
def test_fuzzed_logs_bounded_or_rejected(n, max_steps, data):
    k = data.draw(st.integers(0, 12))
    records = []
    for _ in range(k):
        records.append(rec(
            data.draw(st.integers(0, max_steps + 1)), data.draw(st.integers(-1, n)),
            data.draw(st.floats(-50, 50)), data.draw(st.floats(-50, 50)),
            speed=data.draw(st.floats(-2, 10)), prev=data.draw(st.floats(-2, 10)),
            zone=data.draw(st.booleans()), contact=data.draw(st.booleans()), arrived=data.draw(st.booleans()),
            lidar=data.draw(st.one_of(st.none(), st.floats(-0.5, 1.5))),
            front=data.draw(st.one_of(st.none(), st.floats(-0.5, 1.5))),
        ))
    log = make_log(records, n, max_steps, data.draw(st.integers(0, max_steps + 1)), 0.1)
    try:
        m = compute_episode_metrics(log)
    except MetricsError:
        return
    assert m.success <= n
    assert m.episode_steps <= max_steps
    for name in ("front_end_distance", "limited_lidar", "limited_lidar_in_conflict_zone",
                 "front_end_distance_in_conflict_zone"):
        assert 0.0 <= getattr(m, name) <= 1.0


@pytest.mark.parametrize("mutate,match", [
    (lambda rs: rs[1:], "meta"),
    (lambda rs: rs[:-1], "end"),
    (lambda rs: [rs[0], {k: v for k, v in rs[1].items() if k != "speed"}, *rs[2:]], "lacks"),
    (lambda rs: [rs[0], rs[1], rs[1], *rs[2:]], "duplicate"),
    (lambda rs: [rs[0], dict(rs[1], step=0), *rs[2:]], "outside"),
    (lambda rs: [rs[0], dict(rs[1], agent=9), *rs[2:]], "agent id"),
    (lambda rs: [rs[0], dict(rs[1], lidar_mean=1.5), *rs[2:]], "lidar_mean"),
    (lambda rs: [*rs[:-1], dict(rs[-1], episode_steps=99)], "episode_steps"),
    (lambda rs: [*rs[:-1], dict(rs[-1], episode_steps=1)], "beyond"),
])
def test_malformed_logs_rejected(mutate, match):
    with pytest.raises(MetricsError, match=match):
        compute_episode_metrics(TrajectoryLog(mutate(list(LOG1.records))))


def test_aggregate():
    one = compute_episode_metrics(LOG1)
    assert aggregate([one]).means == one.as_dict()
    r = aggregate([EpisodeMetrics(success=40.0), EpisodeMetrics(success=38.0)])
    assert r["success"] == 39.0 and r.episodes == 2
    with pytest.raises(ValueError):
        aggregate([])


# -- evaluation protocol -------------------------------------------------------------------------

def follower(obs, ids, env):
    """Steer toward the next route checkpoint at moderate throttle."""
    steer = np.clip(2.0 * np.arctan2(obs[:, 7], obs[:, 6]), -1, 1)
    return np.column_stack([steer, np.full(len(ids), 0.6)])


def small(n=1, max_steps=200):
    return RunConfig().replace(sim={"n_vehicles": n, "max_steps": max_steps, "arm_length": 30.0},
                               network={"hidden_sizes": (8,)})


def test_zero_throttle_policy():
    cfg = small(n=2, max_steps=50)
    r = evaluate(lambda obs, ids, env: np.zeros((len(ids), 2)), cfg, n_episodes=2)
    assert r["success"] == 0 and r["velocity_mean"] == 0 and r["episode_steps"] == 50
    assert r.episodes == 2 and r.seeds == (cfg.eval.seed, cfg.eval.seed + 1)


def test_scripted_single_vehicle_arrives():
    r = evaluate(follower, small(), n_episodes=3)
    assert r["success"] == 1.0


def test_same_checkpoint_same_report(tmp_path):
    from crossroads.checkpoint import save_checkpoint
    from crossroads.policy import PolicyNetwork

    cfg = small(n=2, max_steps=40)
    params = PolicyNetwork(cfg.network_config).init_params(0)
    path = save_checkpoint(tmp_path / "p.ckpt", params, cfg.hash)
    a, b = evaluate(path, cfg, 2), evaluate(path, cfg, 2)
    assert a.to_dict() == b.to_dict() and a.config_hash == cfg.hash


def test_checkpoint_config_mismatch(tmp_path):
    from crossroads.checkpoint import save_checkpoint
    from crossroads.policy import PolicyNetwork

    cfg = small()
    params = PolicyNetwork(cfg.network_config).init_params(0)
    path = save_checkpoint(tmp_path / "p.ckpt", params, cfg.hash)
    with pytest.raises(ValueError, match="does not match"):
        evaluate(path, cfg.replace(network={"hidden_sizes": (16,)}), 1)


def test_evaluate_writes_logs(tmp_path):
    evaluate(follower, small(), n_episodes=2, log_dir=tmp_path)
    files = sorted(tmp_path.glob("episode_*.jsonl"))
    assert len(files) == 2
    assert compute_episode_metrics(TrajectoryLog.read(files[0])).success == 1.0
