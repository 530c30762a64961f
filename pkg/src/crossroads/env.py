"""Multi-agent environment: simulator + rewards + trajectory logging."""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .rewards import RewardBreakdown, RewardConfig, total_reward
from .sim.world import SimConfig, World, front_sector, lidar_scan, observe, reset, step

LOG_FIELDS = (
    "kind", "episode", "step", "agent", "x", "y", "heading", "speed", "prev_speed", "route_progress",
    "steer", "throttle", "in_contact", "off_road", "arrived", "crash_onset", "in_conflict_zone",
    "lidar_mean", "lidar_front_min", "reward", "done",
)


class TrajectoryLog:
    """Line-delimited JSON log of one episode.

    Line 1 is a ``meta`` record, then one ``step`` record per (step, agent)
    for every agent active at the start of that step, and a final ``end``
    record. Step ``t`` describes the state after the t-th simulator tick.
    """

    def __init__(self, records: list[dict] | None = None):
        self.records = list(records or [])

    @property
    def meta(self) -> dict:
        for r in self.records:
            if r.get("kind") == "meta":
                return r
        raise ValueError("log has no meta record")

    @property
    def steps(self) -> list[dict]:
        return [r for r in self.records if r.get("kind") == "step"]

    @property
    def end(self) -> dict | None:
        for r in reversed(self.records):
            if r.get("kind") == "end":
                return r
        return None

    def append(self, record: dict) -> None:
        self.records.append(record)

    def dumps(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps())
        return path

    @classmethod
    def read(cls, path) -> "TrajectoryLog":
        return cls.loads(Path(path).read_text())

    @classmethod
    def loads(cls, text: str) -> "TrajectoryLog":
        return cls([json.loads(line) for line in text.splitlines() if line.strip()])


class IntersectionEnv:
    """Dict-keyed multi-agent wrapper around :mod:`crossroads.sim`.

    Observations, rewards and dones are keyed by agent id. Agents leave the
    observation dict after they arrive; the episode ends when none remain or
    the step budget runs out.
    """

    def __init__(self, sim: SimConfig = SimConfig(), rewards: RewardConfig = RewardConfig(), seed: int = 0,
                 record: bool = False):
        self.sim = sim
        self.reward_config = rewards
        self.seed = seed
        self.record = record
        self.world: World | None = None
        self.log: TrajectoryLog | None = None
        self.episode = -1
        self._scans: dict[int, np.ndarray] = {}
        self._front = front_sector(sim.lidar_rays, rewards.front_half_angle)

    @property
    def obs_dim(self) -> int:
        return self.sim.obs_dim

    @property
    def n_agents(self) -> int:
        return self.sim.n_vehicles

    def reset(self, seed: int | None = None) -> dict[int, np.ndarray]:
        self.episode += 1
        self.world = reset(self.sim, self.seed + self.episode if seed is None else seed)
        self._scans = {i: lidar_scan(self.world, i) for i in self.world.active_ids}
        if self.record:
            self.log = TrajectoryLog([self._meta(seed)])
        return self.observations()

    def _meta(self, seed) -> dict:
        geo = self.sim.geometry
        return {"kind": "meta", "episode": self.episode, "seed": seed, "dt": self.sim.dt,
                "max_steps": self.sim.max_steps, "n_vehicles": self.sim.n_vehicles,
                "conflict_zone_half": geo.half_width, "lidar_rays": self.sim.lidar_rays,
                "lidar_range": self.sim.lidar_range, "front_half_angle": self.reward_config.front_half_angle,
                "arm_length": self.sim.arm_length, "lane_width": self.sim.lane_width,
                "lanes_per_arm": self.sim.lanes_per_arm, "vehicle_length": self.sim.dynamics.length,
                "vehicle_width": self.sim.dynamics.width}

    def observations(self) -> dict[int, np.ndarray]:
        return {i: observe(self.world, i, self._scans[i]) for i in self.world.active_ids}

    def positions(self) -> dict[int, tuple[float, float]]:
        return {i: self.world.vehicles[i].position for i in self.world.active_ids}

    @property
    def done(self) -> bool:
        return self.world.done

    def step(self, actions: Mapping[int, Iterable[float]]):
        world, outcomes = step(self.world, actions)
        scans = {i: lidar_scan(world, i) for i in world.active_ids}
        rewards: dict[int, RewardBreakdown] = {}
        episode_over = world.done
        dones = {}
        for i, out in outcomes.items():
            rewards[i] = total_reward(out, scans.get(i), world, self.reward_config)
            dones[i] = out.arrived_now or episode_over
        self._scans = scans
        if self.record:
            self._log_step(outcomes, rewards, dones, scans)
            if episode_over:
                self.log.append({"kind": "end", "episode": self.episode, "episode_steps": world.step_count,
                                 "n_arrived": world.n_arrived})
        info = {"step": world.step_count, "n_arrived": world.n_arrived, "episode_over": episode_over}
        return self.observations(), rewards, dones, info

    def _log_step(self, outcomes, rewards, dones, scans) -> None:
        world = self.world
        for i, out in outcomes.items():
            v = world.vehicles[i]
            scan = scans.get(i)
            self.log.append({
                "kind": "step", "episode": self.episode, "step": world.step_count, "agent": i,
                "x": v.x, "y": v.y, "heading": v.heading, "speed": v.speed, "prev_speed": out.prev_speed,
                "route_progress": v.route_progress, "steer": v.last_action.steer,
                "throttle": v.last_action.throttle, "in_contact": v.in_contact, "off_road": v.off_road,
                "arrived": v.arrived, "crash_onset": any(e.onset for e in out.contacts),
                "in_conflict_zone": world.geometry.in_conflict_zone(v.position),
                "lidar_mean": None if scan is None else float(scan.mean()),
                "lidar_front_min": None if scan is None else float(scan[self._front].min()),
                "reward": rewards[i].as_dict(), "done": dones[i],
            })
