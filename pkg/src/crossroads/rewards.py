"""Driving reward plus the safe-distance and right-of-way shaping terms."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Iterable

import numpy as np

from .sim.geometry import wrap_angle
from .sim.world import CollisionEvent, StepOutcome, World, front_sector

SAFE_DISTANCE = 5.0
SAFE_DISTANCE_MAX_PENALTY = 0.5


@dataclass(frozen=True)
class RewardConfig:
    c_progress: float = 1.0
    c_speed: float = 0.1
    arrival_bonus: float = 10.0
    crash_penalty: float = 5.0
    out_of_road_penalty: float = 5.0
    safe_distance_enabled: bool = False
    right_of_way_enabled: bool = False
    safe_distance_threshold: float = SAFE_DISTANCE
    front_half_angle: float = 25.0

    def __post_init__(self):
        for name in ("c_progress", "c_speed", "arrival_bonus", "crash_penalty", "out_of_road_penalty"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.safe_distance_enabled and self.safe_distance_threshold != SAFE_DISTANCE:
            raise ValueError("safe_distance_threshold is fixed at 5 m when the penalty is enabled")


@dataclass(frozen=True)
class RewardBreakdown:
    progress: float = 0.0
    speed: float = 0.0
    arrival: float = 0.0
    crash_penalty: float = 0.0
    out_of_road_penalty: float = 0.0
    safe_distance_penalty: float = 0.0
    right_of_way_adjustment: float = 0.0

    @property
    def total(self) -> float:
        return (self.progress + self.speed + self.arrival + self.crash_penalty + self.out_of_road_penalty
                + self.safe_distance_penalty + self.right_of_way_adjustment)

    def as_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["total"] = self.total
        return d


def base_reward(outcome: StepOutcome, config: RewardConfig, max_speed: float = 10.0) -> RewardBreakdown:
    n_pairs = len(outcome.contacts) if outcome.contacts else int(outcome.in_contact)
    return RewardBreakdown(
        progress=config.c_progress * outcome.progress_delta,
        speed=config.c_speed * max(outcome.speed, 0.0) / max_speed,
        arrival=config.arrival_bonus if outcome.arrived_now else 0.0,
        crash_penalty=-config.crash_penalty * n_pairs,
        out_of_road_penalty=-config.out_of_road_penalty if outcome.off_road else 0.0,
    )


def safe_distance_value(d: float, threshold: float = SAFE_DISTANCE) -> float:
    if d >= threshold:
        return 0.0
    return -SAFE_DISTANCE_MAX_PENALTY * (threshold - max(d, 0.0)) / threshold


def safe_distance_penalty(scan, config: RewardConfig, lidar_range: float = 50.0) -> float:
    """Penalty from the nearest return in the front sector of a normalised scan."""
    scan = np.asarray(scan, dtype=float)
    rays = front_sector(len(scan), config.front_half_angle)
    d = min(float(scan[rays].min()) * lidar_range, config.safe_distance_threshold)
    return safe_distance_value(d, config.safe_distance_threshold)


def _bearing(from_pos, heading: float, to_pos) -> float:
    """Counterclockwise angle of ``to_pos`` relative to ``heading``, in (-pi, pi]."""
    dx, dy = to_pos[0] - from_pos[0], to_pos[1] - from_pos[1]
    return float(wrap_angle(math.atan2(dy, dx) - heading))


def assign_responsibility(event: CollisionEvent, world: World) -> int:
    """Primary responsible vehicle of a two-vehicle contact.

    Ordered rules, first match wins: a rear-end contact blames the vehicle
    whose front hit the other's rear; inside the conflict zone the vehicle
    that failed to yield to traffic on its right is blamed; otherwise the
    faster vehicle, with ties going to the lower id.
    """
    i, j = event.pair
    vi, vj = world.vehicles[i], world.vehicles[j]
    sector = math.pi / 4
    p = event.contact_point

    def front(v):
        return abs(_bearing(v.position, v.heading, p)) <= sector

    def rear(v):
        return abs(_bearing(v.position, v.heading + math.pi, p)) <= sector

    if front(vi) and rear(vj) and not (front(vj) and rear(vi)):
        return i
    if front(vj) and rear(vi) and not (front(vi) and rear(vj)):
        return j

    geo = world.geometry
    if geo.in_conflict_zone(vi.position) and geo.in_conflict_zone(vj.position):
        # other vehicle on my right <=> clockwise bearing in (0, 180) <=> ccw bearing in (-180, 0)
        i_violates = -math.pi < _bearing(vi.position, vi.heading, vj.position) < 0
        j_violates = -math.pi < _bearing(vj.position, vj.heading, vi.position) < 0
        if i_violates != j_violates:
            return i if i_violates else j

    si, sj = abs(vi.speed), abs(vj.speed)
    if si != sj:
        return i if si > sj else j
    return min(i, j)


def right_of_way_penalty(event: CollisionEvent, responsible: int, config: RewardConfig) -> dict[int, float]:
    i, j = event.pair
    if not config.right_of_way_enabled:
        return {i: -config.crash_penalty, j: -config.crash_penalty}
    other = j if responsible == i else i
    return {responsible: -2.0 * config.crash_penalty, other: 0.0}


def total_reward(outcome: StepOutcome, scan, world: World, config: RewardConfig,
                 events: Iterable[CollisionEvent] | None = None) -> RewardBreakdown:
    """Complete per-step reward for one agent.

    ``events`` defaults to the contacts stored in ``outcome``. With the
    right-of-way rule on, the symmetric crash penalty of every contact pair is
    moved into ``right_of_way_adjustment`` as the rule's split.
    """
    dyn = world.config.dynamics
    r = base_reward(outcome, config, dyn.max_speed)
    sd = 0.0
    if config.safe_distance_enabled and scan is not None:
        sd = safe_distance_penalty(scan, config, world.config.lidar_range)
    crash, row = r.crash_penalty, 0.0
    if config.right_of_way_enabled:
        evs = list(outcome.contacts if events is None else events)
        crash = 0.0
        for ev in evs:
            if outcome.agent in ev.pair:
                row += right_of_way_penalty(ev, assign_responsibility(ev, world), config)[outcome.agent]
    return RewardBreakdown(r.progress, r.speed, r.arrival, crash, r.out_of_road_penalty, sd, row)
