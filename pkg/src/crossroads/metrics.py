"""Episode performance indicators and the evaluation protocol.

All indicators are computed from a :class:`~crossroads.env.TrajectoryLog`
alone. Definitions, per (step, agent) step record unless stated:

* ``success``: vehicles that arrived.
* ``out_of_road`` / ``crash_vehicle``: records flagged off-road / in contact.
* ``velocity_mean``: mean ``|speed|``; ``acceleration``: mean
  ``|speed - prev_speed| / dt``. The ``_in_conflict_zone`` variants keep only
  records whose position lies in the conflict zone.
* ``arrive_steps``: mean arrival step of arrived vehicles (``max_steps`` if
  none arrived); ``episode_steps``: the termination step.
* ``mean_conflict_zone_num`` / ``max_conflict_zone_num``: vehicles in the
  zone per step, averaged / maximised over steps ``1..episode_steps``.
* ``conflict_zone_when_crash``: zone occupancy averaged over the distinct
  steps on which some contact starts.
* ``front_end_distance`` / ``limited_lidar``: normalized front-sector minimum
  and whole-scan mean, over records that carry a scan.
* ``pair_distance``: mean center distance over every (step, pair) of
  vehicles still active after that step.

Means over empty sets are reported as 0.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .checkpoint import load_checkpoint
from .env import IntersectionEnv, TrajectoryLog
from .policy.network import PolicyNetwork
from .policy.params import ModelParameters
from .runtime.collector import neighbor_mask

METRIC_NAMES = (
    "success", "out_of_road", "crash_vehicle", "velocity_mean", "velocity_mean_in_conflict_zone",
    "acceleration", "acceleration_in_conflict_zone", "arrive_steps", "episode_steps",
    "mean_conflict_zone_num", "max_conflict_zone_num", "conflict_zone_when_crash", "front_end_distance",
    "limited_lidar", "limited_lidar_in_conflict_zone", "front_end_distance_in_conflict_zone", "pair_distance",
)
_REQUIRED = ("step", "agent", "x", "y", "speed", "prev_speed", "in_contact", "off_road", "arrived",
             "crash_onset", "in_conflict_zone", "lidar_mean", "lidar_front_min")


class MetricsError(ValueError):
    """Malformed or incomplete trajectory log."""


@dataclass(frozen=True)
class EpisodeMetrics:
    success: float = 0.0
    out_of_road: float = 0.0
    crash_vehicle: float = 0.0
    velocity_mean: float = 0.0
    velocity_mean_in_conflict_zone: float = 0.0
    acceleration: float = 0.0
    acceleration_in_conflict_zone: float = 0.0
    arrive_steps: float = 0.0
    episode_steps: float = 0.0
    mean_conflict_zone_num: float = 0.0
    max_conflict_zone_num: float = 0.0
    conflict_zone_when_crash: float = 0.0
    front_end_distance: float = 0.0
    limited_lidar: float = 0.0
    limited_lidar_in_conflict_zone: float = 0.0
    front_end_distance_in_conflict_zone: float = 0.0
    pair_distance: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def _mean(values) -> float:
    values = list(values)
    return float(sum(values) / len(values)) if values else 0.0


def _validate(log: TrajectoryLog) -> tuple[dict, list[dict], dict]:
    try:
        meta = log.meta
    except ValueError as exc:
        raise MetricsError(str(exc)) from None
    end = log.end
    if end is None:
        raise MetricsError("incomplete log: no end record")
    for key in ("dt", "max_steps", "n_vehicles"):
        if key not in meta:
            raise MetricsError(f"meta record lacks {key!r}")
    steps = log.steps
    seen = set()
    for r in steps:
        missing = [k for k in _REQUIRED if k not in r]
        if missing:
            raise MetricsError(f"step record lacks {missing}")
        key = (r["step"], r["agent"])
        if key in seen:
            raise MetricsError(f"duplicate record for step {r['step']} agent {r['agent']}")
        seen.add(key)
        if not 1 <= r["step"] <= meta["max_steps"]:
            raise MetricsError(f"step {r['step']} outside 1..{meta['max_steps']}")
        if not 0 <= r["agent"] < meta["n_vehicles"]:
            raise MetricsError(f"agent id {r['agent']} outside 0..{meta['n_vehicles'] - 1}")
        for k in ("lidar_mean", "lidar_front_min"):
            if r[k] is not None and not 0.0 <= r[k] <= 1.0:
                raise MetricsError(f"{k}={r[k]} outside [0, 1]")
        if (r["lidar_mean"] is None) != (r["lidar_front_min"] is None):
            raise MetricsError("lidar_mean and lidar_front_min must both be set or both be null")
    episode_steps = end.get("episode_steps")
    if episode_steps is None or not 0 <= episode_steps <= meta["max_steps"]:
        raise MetricsError(f"episode_steps {episode_steps!r} outside 0..{meta['max_steps']}")
    if steps and max(r["step"] for r in steps) > episode_steps:
        raise MetricsError("step records beyond the episode end")
    return meta, steps, end


def compute_episode_metrics(log: TrajectoryLog) -> EpisodeMetrics:
    """All 17 indicators for one logged episode (pure function of the log)."""
    meta, steps, end = _validate(log)
    dt = meta["dt"]
    episode_steps = int(end["episode_steps"])
    zone = [r for r in steps if r["in_conflict_zone"]]

    arrival = {}
    for r in steps:
        if r["arrived"]:
            arrival.setdefault(r["agent"], r["step"])
    if len(arrival) > meta["n_vehicles"]:
        raise MetricsError("more arrivals than vehicles")

    occupancy = {t: 0 for t in range(1, episode_steps + 1)}
    for r in zone:
        occupancy[r["step"]] += 1
    onset_steps = sorted({r["step"] for r in steps if r["crash_onset"]})

    scanned = [r for r in steps if r["lidar_mean"] is not None]
    scanned_zone = [r for r in scanned if r["in_conflict_zone"]]

    by_step: dict[int, list[tuple[float, float]]] = {}
    for r in steps:
        if not r["arrived"]:
            by_step.setdefault(r["step"], []).append((r["x"], r["y"]))
    gaps = [math.hypot(a[0] - b[0], a[1] - b[1])
            for pts in by_step.values() for a, b in itertools.combinations(pts, 2)]

    accel = lambda rs: _mean(abs(r["speed"] - r["prev_speed"]) / dt for r in rs)
    return EpisodeMetrics(
        success=float(len(arrival)),
        out_of_road=float(sum(1 for r in steps if r["off_road"])),
        crash_vehicle=float(sum(1 for r in steps if r["in_contact"])),
        velocity_mean=_mean(abs(r["speed"]) for r in steps),
        velocity_mean_in_conflict_zone=_mean(abs(r["speed"]) for r in zone),
        acceleration=accel(steps),
        acceleration_in_conflict_zone=accel(zone),
        arrive_steps=_mean(arrival.values()) if arrival else float(meta["max_steps"]),
        episode_steps=float(episode_steps),
        mean_conflict_zone_num=_mean(occupancy.values()),
        max_conflict_zone_num=float(max(occupancy.values(), default=0)),
        conflict_zone_when_crash=_mean(occupancy[t] for t in onset_steps),
        front_end_distance=_mean(r["lidar_front_min"] for r in scanned),
        limited_lidar=_mean(r["lidar_mean"] for r in scanned),
        limited_lidar_in_conflict_zone=_mean(r["lidar_mean"] for r in scanned_zone),
        front_end_distance_in_conflict_zone=_mean(r["lidar_front_min"] for r in scanned_zone),
        pair_distance=_mean(gaps),
    )


@dataclass(frozen=True)
class MetricsReport:
    means: dict[str, float]
    episodes: int
    config_hash: str = ""
    seeds: tuple[int, ...] = ()
    per_episode: tuple[EpisodeMetrics, ...] = field(default=(), repr=False)

    def __getitem__(self, name: str) -> float:
        return self.means[name]

    def to_dict(self) -> dict:
        return {"metrics": dict(self.means), "episodes": self.episodes, "config_hash": self.config_hash,
                "seeds": list(self.seeds)}

    def write_json(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    def write_csv(self, path) -> Path:
        """One row per indicator, labelled with the reference indicator names."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["metric", "value"])
            for name in METRIC_NAMES:
                writer.writerow([name, repr(float(self.means[name]))])
        return path


def aggregate(episodes: Sequence[EpisodeMetrics], config_hash: str = "",
              seeds: Sequence[int] = ()) -> MetricsReport:
    if not episodes:
        raise ValueError("aggregate needs at least one episode")
    means = {f.name: float(np.mean([getattr(e, f.name) for e in episodes])) for f in fields(EpisodeMetrics)}
    return MetricsReport(means, len(episodes), config_hash, tuple(seeds), tuple(episodes))


# -- evaluation ------------------------------------------------------------------

Policy = Callable[[np.ndarray, list[int], IntersectionEnv], np.ndarray]


def deterministic_policy(net: PolicyNetwork, params: ModelParameters) -> Policy:
    """``tanh(mean)`` actions, no sampling noise."""
    flat = params.as_float64()

    def act(obs, ids, env):
        if net.ctce:
            pos = np.array([env.world.vehicles[i].position for i in ids])
            out = net.forward_ctce(flat, obs, neighbor_mask(pos, net.config.pool_radius))
        else:
            out = net.forward(flat, obs)
        return np.tanh(out.mean)

    return act


def load_policy(source, config) -> Policy:
    """Turn a checkpoint path, parameters or callable into a policy."""
    if callable(source):
        return source
    net = PolicyNetwork(config.network_config)
    params = load_checkpoint(source)[0] if isinstance(source, (str, Path)) else source
    if tuple(params.layout) != tuple(net.layout):
        raise ValueError("checkpoint does not match the configured network (obs_dim, sizes or mode differ)")
    return deterministic_policy(net, params)


def run_episode(env: IntersectionEnv, policy: Policy, seed: int) -> TrajectoryLog:
    obs = env.reset(seed)
    while True:
        ids = sorted(obs)
        if not ids:
            break
        actions = np.asarray(policy(np.stack([obs[i] for i in ids]), ids, env), dtype=np.float64)
        obs, _, _, info = env.step({i: actions[k] for k, i in enumerate(ids)})
        if info["episode_over"]:
            break
    return env.log


def evaluate(policy, config, n_episodes: int | None = None, base_seed: int | None = None,
             log_dir=None) -> MetricsReport:
    """Run the evaluation protocol: seeds ``base .. base+n-1``, deterministic actions.

    ``policy`` is a checkpoint path, :class:`ModelParameters` or a callable
    ``(obs, ids, env) -> actions``; ``config`` is a RunConfig.
    """
    n_episodes = config.eval.episodes if n_episodes is None else n_episodes
    base_seed = config.eval.seed if base_seed is None else base_seed
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    act = load_policy(policy, config)
    env = IntersectionEnv(config.sim, config.rewards, seed=base_seed, record=True)
    results, seeds = [], []
    for k in range(n_episodes):
        seed = base_seed + k
        log = run_episode(env, act, seed)
        if log_dir is not None:
            log.write(Path(log_dir) / f"episode_{seed}.jsonl")
        results.append(compute_episode_metrics(log))
        seeds.append(seed)
    return aggregate(results, config.hash, seeds)
