import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crossroads.rewards import (
    RewardConfig,
    assign_responsibility,
    base_reward,
    right_of_way_penalty,
    safe_distance_penalty,
    safe_distance_value,
    total_reward,
)
from crossroads.sim.geometry import RouteSpec
from crossroads.sim.vehicle import VehicleState
from crossroads.sim.world import SimConfig, StepOutcome, World, detect_collisions, front_sector, lidar_scan, reset, step

BOTH = RewardConfig(safe_distance_enabled=True, right_of_way_enabled=True)
ROW = RewardConfig(right_of_way_enabled=True)


def outcome(ds=0.0, v=0.0, contact=False, off=False, arrived=False, agent=0):
    return StepOutcome(agent, ds, v, v, contact, off, arrived)


def world_with(poses, routes):
    vehicles = [VehicleState(x, y, h, s) for x, y, h, s in poses]
    return World(SimConfig(n_vehicles=len(poses)), routes, vehicles, np.random.default_rng(0))


def scan_with_front(d, n=72, max_range=50.0):
    scan = np.ones(n)
    scan[front_sector(n, 25.0)[3]] = d / max_range
    return scan


# -- base reward -----------------------------------------------------------------------

def test_base_reward_progress_and_speed():
    assert base_reward(outcome(1.0, 10.0), RewardConfig()).total == pytest.approx(1.1)


def test_base_reward_arrival():
    assert base_reward(outcome(0.5, 5.0, arrived=True), RewardConfig()).total == pytest.approx(10.55)


def test_base_reward_contact_and_off_road():
    r = base_reward(outcome(0.0, 0.0, contact=True, off=True), RewardConfig())
    assert r.total == pytest.approx(-10.0)
    assert r.safe_distance_penalty == 0.0 and r.right_of_way_adjustment == 0.0


def test_reward_config_validation():
    with pytest.raises(ValueError):
        RewardConfig(crash_penalty=-1)
    with pytest.raises(ValueError):
        RewardConfig(safe_distance_enabled=True, safe_distance_threshold=3.0)


# -- safe distance ----------------------------------------------------------------------------

@pytest.mark.parametrize("d,expected", [(5.0, 0.0), (2.5, -0.25), (0.0, -0.5), (7.0, 0.0)])
def test_safe_distance_examples(d, expected):
    assert safe_distance_penalty(scan_with_front(d), BOTH) == pytest.approx(expected, abs=1e-12)


def test_safe_distance_grid_exact():
    for d in np.linspace(0.0, 10.0, 1001):
        expected = -0.5 * (5.0 - d) / 5.0 if d < 5.0 else 0.0
        assert abs(safe_distance_penalty(scan_with_front(d), BOTH) - expected) <= 1e-12
        assert abs(safe_distance_value(d) - expected) <= 1e-12


def test_safe_distance_ignores_rays_outside_front_sector():
    scan = np.ones(72)
    scan[9] = 0.01  # 45 degrees to the left
    scan[36] = 0.01  # straight behind
    assert safe_distance_penalty(scan, BOTH) == 0.0


@settings(max_examples=200)
@given(d1=st.floats(0.0, 20.0), d2=st.floats(0.0, 20.0))
def test_safe_distance_monotone_and_bounded(d1, d2):
    lo, hi = sorted((d1, d2))
    assert safe_distance_value(lo) <= safe_distance_value(hi)
    assert -0.5 <= safe_distance_value(lo) <= 0.0


# -- right of way --------------------------------------------------------------------------------

EAST = RouteSpec(0, 0, 2, 0)
NORTH = RouteSpec(3, 0, 1, 0)
WEST = RouteSpec(2, 0, 0, 0)


def contact_world(poses, routes):
    w = world_with(poses, routes)
    w.contacts = {e.pair: e for e in detect_collisions(w)}
    return w


def test_rear_end_blames_follower():
    # vehicle 1 follows vehicle 0 and is slower, so only the rear-end rule can blame it
    w = contact_world([(-21.0, -1.75, 0.0, 3.0), (-25.0, -1.75, 0.0, 1.0)], [EAST, EAST])
    (ev,) = w.contacts.values()
    assert assign_responsibility(ev, w) == 1


def test_crossing_blames_vehicle_with_traffic_on_its_right():
    # A (id 0) heads north from the south, B (id 1) heads east; A is on B's right
    w = contact_world([(0.0, -2.5, math.pi / 2, 4.0), (0.0, 0.0, 0.0, 2.0)], [NORTH, EAST])
    (ev,) = w.contacts.values()
    assert ev.contact_point == pytest.approx((0.0, -0.25))
    assert assign_responsibility(ev, w) == 1


def test_head_on_tie_goes_to_lower_id():
    w = contact_world([(2.0, 0.0, math.pi, 3.0), (-2.0, 0.0, 0.0, 3.0)], [WEST, EAST])
    (ev,) = w.contacts.values()
    assert assign_responsibility(ev, w) == 0


def test_faster_vehicle_blamed_outside_zone_side_swipe():
    w = contact_world([(-30.0, -1.75, 0.0, 2.0), (-30.0, -0.25, 0.0, 5.0)], [EAST, EAST])
    (ev,) = w.contacts.values()
    assert assign_responsibility(ev, w) == 1


def test_right_of_way_split():
    w = contact_world([(-21.0, -1.75, 0.0, 3.0), (-25.0, -1.75, 0.0, 1.0)], [EAST, EAST])
    (ev,) = w.contacts.values()
    assert right_of_way_penalty(ev, 1, ROW) == {1: -10.0, 0: 0.0}
    assert right_of_way_penalty(ev, 1, RewardConfig()) == {0: -5.0, 1: -5.0}


def _crash_terms(w, outcomes, config):
    return {i: total_reward(o, None, w, config) for i, o in outcomes.items()}


@pytest.mark.parametrize("poses,routes", [
    ([(-21.0, -1.75, 0.0, 3.0), (-25.0, -1.75, 0.0, 1.0)], [EAST, EAST]),
    ([(0.0, -2.5, math.pi / 2, 4.0), (0.0, 0.0, 0.0, 2.0)], [NORTH, EAST]),
    ([(2.0, 0.0, math.pi, 3.0), (-2.0, 0.0, 0.0, 3.0)], [WEST, EAST]),
])
def test_pair_sum_conserved(poses, routes):
    w = world_with(poses, routes)
    _, out = step(w, [(0.0, 0.0)] * len(poses))
    on = _crash_terms(w, out, ROW)
    off = _crash_terms(w, out, RewardConfig())
    assert sorted(r.right_of_way_adjustment for r in on.values()) == [-10.0, 0.0]
    assert [r.crash_penalty for r in off.values()] == [-5.0, -5.0]
    assert sum(r.total for r in on.values()) == pytest.approx(sum(r.total for r in off.values()), abs=1e-12)


def test_three_vehicle_pileup_resolved_per_pair():
    poses = [(-17.0, -1.75, 0.0, 3.0), (-21.0, -1.75, 0.0, 2.0), (-25.0, -1.75, 0.0, 1.0)]
    w = world_with(poses, [EAST] * 3)
    _, out = step(w, [(0.0, 0.0)] * 3)
    assert sorted(w.contacts) == [(0, 1), (1, 2)]
    on = _crash_terms(w, out, ROW)
    off = _crash_terms(w, out, RewardConfig())
    # each follower is blamed for the pair it rear-ends
    assert {i: r.right_of_way_adjustment for i, r in on.items()} == {0: 0.0, 1: -10.0, 2: -10.0}
    assert {i: r.crash_penalty for i, r in off.items()} == {0: -5.0, 1: -10.0, 2: -5.0}
    assert sum(r.total for r in on.values()) == pytest.approx(sum(r.total for r in off.values()))


# -- total reward -----------------------------------------------------------------------------------

def test_total_reward_open_road():
    w = reset(SimConfig(n_vehicles=1), 0)
    assert total_reward(outcome(1.0, 10.0), scan_with_front(8.0), w, BOTH).total == pytest.approx(1.1)


def test_total_reward_tailgating():
    w = reset(SimConfig(n_vehicles=1), 0)
    assert total_reward(outcome(1.0, 10.0), scan_with_front(2.5), w, BOTH).total == pytest.approx(0.85)


def test_total_reward_responsible_contact_with_both_rules():
    w = world_with([(-21.0, -1.75, 0.0, 3.0), (-25.0, -1.75, 0.0, 1.0)], [EAST, EAST])
    _, out = step(w, [(0.0, 0.0)] * 2)
    scan = lidar_scan(w, 1)
    r = total_reward(out[1], scan, w, BOTH)
    base = base_reward(out[1], BOTH)
    d = float(scan[front_sector(72, 25.0)].min()) * 50.0
    sd = -0.5 * (5.0 - d) / 5.0
    expected = base.progress + base.speed - 10.0 + sd
    assert r.total == pytest.approx(expected, abs=1e-12)
    assert r.crash_penalty == 0.0 and r.right_of_way_adjustment == -10.0


def test_shaping_disabled_matches_base():
    w = world_with([(-21.0, -1.75, 0.0, 3.0), (-25.0, -1.75, 0.0, 1.0)], [EAST, EAST])
    _, out = step(w, [(0.0, 0.0)] * 2)
    for i, o in out.items():
        assert total_reward(o, lidar_scan(w, i), w, RewardConfig()).total == base_reward(o, RewardConfig()).total
