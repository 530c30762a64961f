"""Deterministic multi-vehicle intersection world."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Mapping, Sequence

import numpy as np

from .geometry import (
    MapGeometry,
    Route,
    RouteSpec,
    box_corners,
    box_edges,
    boxes_overlap,
    ray_segment_distances,
    wrap_angle,
)
from .vehicle import Action, Dynamics, VehicleState, bicycle_step

OBS_EGO = 6
OBS_NAV = 5


@dataclass(frozen=True)
class SimConfig:
    arm_length: float = 60.0
    lane_width: float = 3.5
    lanes_per_arm: int = 2
    n_vehicles: int = 40
    dt: float = 0.1
    max_steps: int = 1000
    spawn_headway: float = 10.0
    arrival_radius: float = 4.0
    lidar_rays: int = 72
    lidar_range: float = 50.0
    checkpoint_spacing: float = 5.0
    nav_scale: float = 50.0
    dynamics: Dynamics = field(default_factory=Dynamics)

    def __post_init__(self):
        if self.n_vehicles < 1:
            raise ValueError("n_vehicles must be >= 1")
        if self.lanes_per_arm < 1:
            raise ValueError("lanes_per_arm must be >= 1")
        if self.dt <= 0 or self.max_steps < 1:
            raise ValueError("dt and max_steps must be positive")
        if self.lidar_rays < 1 or self.lidar_range <= 0:
            raise ValueError("lidar needs >= 1 ray and a positive range")

    @property
    def geometry(self) -> MapGeometry:
        return MapGeometry(self.arm_length, self.lane_width, self.lanes_per_arm)

    @property
    def obs_dim(self) -> int:
        return OBS_EGO + OBS_NAV + self.lidar_rays

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimConfig":
        d = dict(d)
        if isinstance(d.get("dynamics"), Mapping):
            d["dynamics"] = Dynamics(**d["dynamics"])
        return cls(**d)


@dataclass(frozen=True)
class CollisionEvent:
    pair: tuple[int, int]
    contact_point: tuple[float, float]
    step: int
    onset: bool

    def to_record(self) -> dict:
        return {"kind": "collision", "pair": list(self.pair), "contact_point": list(self.contact_point),
                "step": self.step, "onset": self.onset}


@dataclass(frozen=True)
class StepOutcome:
    agent: int
    progress_delta: float
    speed: float
    prev_speed: float
    in_contact: bool
    off_road: bool
    arrived_now: bool
    contacts: tuple[CollisionEvent, ...] = ()


def front_sector(n_rays: int, half_angle_deg: float) -> np.ndarray:
    """Indices of rays with bearing in ``[-half_angle, +half_angle)`` of the heading.

    The half-open interval gives ``2 * half_angle / spacing`` rays, e.g. 10
    rays for +-25 degrees at 72 rays per turn.
    """
    bearing = np.degrees(wrap_angle(2 * np.pi * np.arange(n_rays) / n_rays))
    return np.flatnonzero((bearing >= -half_angle_deg - 1e-9) & (bearing < half_angle_deg - 1e-9))


def _inside_quads(points: np.ndarray, quad: np.ndarray) -> np.ndarray:
    edges = np.roll(quad, -1, axis=0) - quad
    rel = points[:, None, :] - quad[None, :, :]
    cross = edges[None, :, 0] * rel[..., 1] - edges[None, :, 1] * rel[..., 0]
    return (cross >= 0).all(axis=1)


class World:
    """Full simulator state; mutated in place by :meth:`step`."""

    def __init__(self, config: SimConfig, routes: list[RouteSpec], vehicles: list[VehicleState],
                 rng: np.random.Generator, step: int = 0):
        self.config = config
        self.geometry = config.geometry
        self.route_specs = list(routes)
        self.routes: list[Route] = [self.geometry.build_route(r) for r in routes]
        self.vehicles = list(vehicles)
        self.rng = rng
        self.step_count = step
        self.event_log: list[dict] = []
        self.contacts: dict[tuple[int, int], CollisionEvent] = {}
        self._corner_cache: tuple[tuple, np.ndarray] | None = None
        angles = 2 * np.pi * np.arange(config.lidar_rays) / config.lidar_rays
        self._ray_angles = angles

    # -- queries ---------------------------------------------------------
    @property
    def n_agents(self) -> int:
        return len(self.vehicles)

    @property
    def active_ids(self) -> list[int]:
        return [i for i, v in enumerate(self.vehicles) if v.active]

    @property
    def done(self) -> bool:
        return not self.active_ids or self.step_count >= self.config.max_steps

    @property
    def n_arrived(self) -> int:
        return sum(v.arrived for v in self.vehicles)

    def _all_corners(self) -> np.ndarray:
        key = self._corner_cache[0] if self._corner_cache else ()
        if len(key) != len(self.vehicles) or any(a is not b for a, b in zip(key, self.vehicles)):
            dyn = self.config.dynamics
            c = box_corners([v.position for v in self.vehicles], [v.heading for v in self.vehicles],
                            dyn.length, dyn.width)
            self._corner_cache = (tuple(self.vehicles), c)
        return self._corner_cache[1]

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "routes": [asdict(r) for r in self.route_specs],
            "vehicles": [asdict(v) for v in self.vehicles],
            "step": self.step_count,
            "rng_state": self.rng.bit_generator.state,
            "event_log": list(self.event_log),
            "contacts": [e.to_record() for e in self.contacts.values()],
        }

    def serialize(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True).encode()

    @classmethod
    def from_dict(cls, d: Mapping) -> "World":
        config = SimConfig.from_dict(d["config"])
        vehicles = []
        for v in d["vehicles"]:
            v = dict(v)
            v["last_action"] = Action(**v["last_action"])
            vehicles.append(VehicleState(**v))
        rng = np.random.default_rng()
        rng.bit_generator.state = d["rng_state"]
        w = cls(config, [RouteSpec(**r) for r in d["routes"]], vehicles, rng, d["step"])
        w.event_log = list(d["event_log"])
        for rec in d["contacts"]:
            ev = CollisionEvent(tuple(rec["pair"]), tuple(rec["contact_point"]), rec["step"], rec["onset"])
            w.contacts[ev.pair] = ev
        return w

    @classmethod
    def deserialize(cls, blob: bytes) -> "World":
        return cls.from_dict(json.loads(blob))

    def copy(self) -> "World":
        return World.from_dict(json.loads(self.serialize()))


def spawn_slots(geometry: MapGeometry, headway: float, vehicle_length: float):
    """Queue positions, nearest to the junction first, cycling arms then lanes."""
    slots = []
    j = 0
    while True:
        depth = headway / 2 + j * headway
        if depth + vehicle_length / 2 > geometry.arm_length:
            return slots
        for lane in range(geometry.lanes_per_arm):
            for arm in range(4):
                slots.append((arm, lane, depth))
        j += 1


def reset(config: SimConfig, seed: int) -> World:
    geometry = config.geometry
    dyn = config.dynamics
    if config.spawn_headway < dyn.length:
        raise ValueError("spawn_headway shorter than a vehicle: initial overlap")
    slots = spawn_slots(geometry, config.spawn_headway, dyn.length)
    if config.n_vehicles > len(slots):
        raise ValueError(
            f"cannot place {config.n_vehicles} vehicles without overlap; "
            f"arm_length={config.arm_length} holds {len(slots)}"
        )
    rng = np.random.default_rng(seed)
    exits = {}
    for arm in range(4):
        for lane in range(geometry.lanes_per_arm):
            options = geometry.legal_exits(arm, lane)
            exits[(arm, lane)] = [options[k] for k in rng.permutation(len(options))]
    used: dict[tuple[int, int], int] = {}
    routes, vehicles = [], []
    for arm, lane, depth in slots[: config.n_vehicles]:
        m = used.get((arm, lane), 0)
        used[(arm, lane)] = m + 1
        spec = exits[(arm, lane)][m % len(exits[(arm, lane)])]
        pos, theta = geometry.entry_pose(arm, lane, depth)
        route = geometry.build_route(spec)
        s, _, _ = route.project(pos, geometry.arm_length - depth, back=1.0, ahead=1.0)
        routes.append(spec)
        vehicles.append(VehicleState(float(pos[0]), float(pos[1]), theta, 0.0, s))
    return World(config, routes, vehicles, rng)


def in_conflict_zone(position, geometry: MapGeometry | None = None) -> bool:
    return (geometry or MapGeometry()).in_conflict_zone(position)


def detect_collisions(world: World) -> list[CollisionEvent]:
    """All overlapping pairs of active vehicles; onset is relative to the last step."""
    ids = world.active_ids
    if len(ids) < 2:
        return []
    corners = world._all_corners()
    idx = np.array(ids)
    centers = np.array([world.vehicles[i].position for i in ids])
    ii, jj = np.triu_indices(len(ids), k=1)
    dyn = world.config.dynamics
    reach = np.hypot(dyn.length, dyn.width)
    near = np.hypot(*(centers[ii] - centers[jj]).T) <= reach
    ii, jj = ii[near], jj[near]
    if len(ii) == 0:
        return []
    hit = boxes_overlap(corners[idx[ii]], corners[idx[jj]])
    events = []
    for a, b in zip(idx[ii[hit]], idx[jj[hit]]):
        a, b = int(a), int(b)
        ca, cb = corners[a], corners[b]
        inside = np.concatenate([ca[_inside_quads(ca, cb)], cb[_inside_quads(cb, ca)]])
        point = inside.mean(axis=0) if len(inside) else (centers[ids.index(a)] + centers[ids.index(b)]) / 2
        events.append(CollisionEvent((a, b), (float(point[0]), float(point[1])), world.step_count,
                                     (a, b) not in world.contacts))
    return events


def lidar_scan(world: World, agent: int) -> np.ndarray:
    """Normalised distances for evenly spaced rays; ray 0 points along the heading."""
    v = world.vehicles[agent]
    if not v.active:
        raise ValueError(f"agent {agent} is not active")
    cfg = world.config
    origin = np.array(v.position)
    others = [i for i in world.active_ids if i != agent]
    segs = [world.geometry.boundary_segments.reshape(-1, 2, 2)]
    if others:
        corners = world._all_corners()[others]
        centers = corners.mean(axis=1)
        close = np.hypot(*(centers - origin).T) <= cfg.lidar_range + np.hypot(cfg.dynamics.length, cfg.dynamics.width)
        if close.any():
            segs.append(box_edges(corners[close]))
    segments = np.concatenate(segs)
    angles = v.heading + world._ray_angles
    dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    dist = ray_segment_distances(origin, dirs, segments)
    return np.minimum(dist, cfg.lidar_range) / cfg.lidar_range


def observe(world: World, agent: int, scan: np.ndarray | None = None) -> np.ndarray:
    """Fixed-length observation: ego block, navigation block, lidar block."""
    v = world.vehicles[agent]
    if not v.active:
        raise ValueError(f"agent {agent} is not active")
    cfg = world.config
    route = world.routes[agent]
    _, lateral, tangent = route.project(v.position, v.route_progress)
    err = v.heading - tangent
    ego = [v.speed / cfg.dynamics.max_speed, np.cos(err), np.sin(err), lateral / cfg.lane_width,
           v.last_action.steer, v.last_action.throttle]
    c, s = np.cos(v.heading), np.sin(v.heading)
    nav = []
    for k in (1, 2):
        rel = route.point_at(v.route_progress + k * cfg.checkpoint_spacing) - np.array(v.position)
        nav += [(c * rel[0] + s * rel[1]) / cfg.nav_scale, (-s * rel[0] + c * rel[1]) / cfg.nav_scale]
    nav.append(max(route.length - v.route_progress, 0.0) / route.length)
    if scan is None:
        scan = lidar_scan(world, agent)
    return np.concatenate([ego, nav, scan]).astype(np.float64)


def step(world: World, actions) -> tuple[World, dict[int, StepOutcome]]:
    """Advance every active vehicle one tick; the world is updated in place.

    ``actions`` is a mapping from active agent id to an action, or a sequence
    aligned with ``world.active_ids``.
    """
    ids = world.active_ids
    if isinstance(actions, Mapping):
        if sorted(actions) != ids:
            raise ValueError(f"expected actions for agents {ids}, got {sorted(actions)}")
        acts = {i: Action.coerce(actions[i]) for i in ids}
    else:
        actions = list(actions) if not isinstance(actions, np.ndarray) else actions
        if len(actions) != len(ids):
            raise ValueError(f"expected {len(ids)} actions, got {len(actions)}")
        acts = {i: Action.coerce(a) for i, a in zip(ids, actions)}

    cfg = world.config
    geo = world.geometry
    t_next = world.step_count + 1
    prev = {i: world.vehicles[i] for i in ids}
    arrived_now = set()
    for i in ids:
        v = bicycle_step(prev[i], acts[i], cfg.dt, cfg.dynamics)
        route = world.routes[i]
        s, _, _ = route.project(v.position, v.route_progress)
        off = not bool(geo.on_road(v.position)[0])
        if off and not prev[i].off_road:
            world.event_log.append({"kind": "off_road", "agent": i, "step": t_next})
        arrived = bool(np.hypot(v.x - route.end[0], v.y - route.end[1]) <= cfg.arrival_radius)
        if arrived:
            arrived_now.add(i)
            world.event_log.append({"kind": "arrival", "agent": i, "step": t_next})
        world.vehicles[i] = replace(v, route_progress=s, off_road=off, arrived=arrived, active=not arrived,
                                    in_contact=False)

    world.step_count = t_next
    events = detect_collisions(world)
    world.contacts = {e.pair: e for e in events}
    touching: dict[int, list[CollisionEvent]] = {i: [] for i in ids}
    for e in events:
        touching[e.pair[0]].append(e)
        touching[e.pair[1]].append(e)
        if e.onset:
            world.event_log.append(e.to_record())
    outcomes = {}
    for i in ids:
        v = world.vehicles[i]
        if touching[i]:
            v = world.vehicles[i] = replace(v, in_contact=True)
        outcomes[i] = StepOutcome(i, v.route_progress - prev[i].route_progress, v.speed, prev[i].speed,
                                  v.in_contact, v.off_road, i in arrived_now, tuple(touching[i]))
    return world, outcomes
