"""Actor/learner orchestration.

``run_training`` drives one learner and ``runtime.actors`` actors. In
deterministic mode everything runs in this process: actors collect in a
fixed round-robin order and the learner consumes whenever a batch is ready,
so two runs with equal seeds produce identical statistics. Otherwise each
actor is a separate process that fetches the latest snapshot from shared
memory before every segment and ships segments back over a queue.
"""
from __future__ import annotations

import json
import multiprocessing as mp
import queue
import threading
import time
import traceback
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..algos import Batch, RunningMeanStd, make_learner
from ..checkpoint import save_checkpoint
from ..config import RunConfig, dump_config
from ..env import IntersectionEnv
from ..policy.network import PolicyNetwork
from ..policy.params import ModelParameters
from .buffer import FIFO, REPLAY, BufferConfig, SegmentBuffer
from .collector import Collector
from .store import ParameterStore, SharedParameterStore

TIMING_FIELDS = ("elapsed", "env_steps_per_sec", "updates_per_min")


@dataclass
class RunStats:
    update: int = 0
    version: int = 0
    elapsed: float = 0.0
    env_steps: int = 0
    env_steps_per_sec: float = 0.0
    produced: int = 0
    consumed: int = 0
    discarded: int = 0
    queued: int = 0
    discard_fraction: float = 0.0
    updates_per_min: float = 0.0
    mean_gap: float = 0.0
    episodes: int = 0
    mean_success: float = 0.0
    mean_return: float = 0.0
    learner: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return asdict(self)

    def without_timing(self) -> dict:
        """Record minus wall-clock dependent fields (for reproducibility checks)."""
        rec = self.to_record()
        for k in TIMING_FIELDS:
            rec.pop(k)
        return rec


@dataclass
class TrainResult:
    params: ModelParameters
    stats: list[RunStats]
    manifest: dict
    out_dir: Path | None

    @property
    def final(self) -> RunStats:
        return self.stats[-1]


def env_seed(config: RunConfig, actor: int, slot: int) -> int:
    """Disjoint episode-seed streams per (run seed, actor, env slot)."""
    return config.runtime.seed * 1_000_003 + (actor * config.runtime.envs_per_actor + slot) * 100_000


def make_collectors(config: RunConfig, net: PolicyNetwork, actor: int) -> list[Collector]:
    out = []
    for slot in range(config.runtime.envs_per_actor):
        env_id = actor * config.runtime.envs_per_actor + slot
        env = IntersectionEnv(config.sim, config.rewards, seed=env_seed(config, actor, slot))
        out.append(Collector(env, net, config.algo.name, config.runtime.horizon, env_id,
                             seed=config.runtime.seed * 7919 + env_id, exploration_noise=config.algo.hyper.ddpg_noise))
    return out


class _Progress:
    """Episode outcome window shared by all actors."""

    def __init__(self, window: int = 100):
        self.success: list[float] = []
        self.returns: list[float] = []
        self.window = window
        self.episodes = 0
        self.env_steps = 0

    def add(self, steps: int, episodes: list[tuple[float, float]]) -> None:
        self.env_steps += steps
        for success, ret in episodes:
            self.episodes += 1
            self.success = (self.success + [success])[-self.window:]
            self.returns = (self.returns + [ret])[-self.window:]


def _drain(collector: Collector, steps_before: int) -> tuple[int, list[tuple[float, float]]]:
    return collector.env_steps - steps_before, collector.pop_finished()


class Learner:
    """Wraps an algorithm with the buffer-to-update pipeline."""

    def __init__(self, config: RunConfig, net: PolicyNetwork, params: ModelParameters):
        self.config = config
        self.net = net
        self.algo = make_learner(config.algo.name, net, config.algo.hyper, config.runtime.seed)
        self.params = params
        self.reward_stats = RunningMeanStd() if config.algo.hyper.reward_scaling else None
        rt = config.runtime
        self.buffer = SegmentBuffer(BufferConfig(
            horizon=rt.horizon, batch_segments=rt.batch_segments, capacity=rt.capacity,
            max_avg_version_gap=rt.max_avg_version_gap, mode=FIFO if self.algo.on_policy else REPLAY,
            replay_capacity=rt.replay_capacity), seed=rt.seed)
        self.updates = 0
        self.last_stats: dict = {}

    def ready(self) -> bool:
        if self.algo.on_policy:
            return True
        hyper = self.config.algo.hyper
        # one gradient step per segment received keeps the replay ratio bounded
        return len(self.buffer) >= hyper.replay_batch_size and self.buffer.produced > self.updates

    def step(self, timeout: float | None = None) -> bool:
        """One update if data allows; returns whether an update happened."""
        if self.algo.on_policy:
            segments = self.buffer.sample_batch(self.params.version, timeout)
            if segments is None:
                return False
            batch = Batch.from_segments(segments).with_advantages(self.config.algo.hyper, self.reward_stats)
        else:
            if not self.ready():
                return False
            batch = self.buffer.sample_replay(self.config.algo.hyper.replay_batch_size)
        self.params, self.last_stats = self.algo.update(self.params, batch)
        self.updates += 1
        return True


def _stats(learner: Learner, progress: _Progress, start: float) -> RunStats:
    elapsed = max(time.perf_counter() - start, 1e-9)
    acc = learner.buffer.accounting()
    return RunStats(
        update=learner.updates, version=learner.params.version, elapsed=elapsed, env_steps=progress.env_steps,
        env_steps_per_sec=progress.env_steps / elapsed, produced=acc["produced"], consumed=acc["consumed"],
        discarded=acc["discarded"], queued=acc["queued"], discard_fraction=learner.buffer.discard_fraction,
        updates_per_min=60.0 * learner.updates / elapsed, mean_gap=learner.buffer.last_mean_gap,
        episodes=progress.episodes, mean_success=float(np.mean(progress.success)) if progress.success else 0.0,
        mean_return=float(np.mean(progress.returns)) if progress.returns else 0.0,
        learner={k: float(v) for k, v in sorted(learner.last_stats.items())},
    )


class _Outputs:
    """Stats stream, checkpoints, periodic evaluation and the manifest."""

    def __init__(self, config: RunConfig, out_dir):
        self.config = config
        self.dir = Path(out_dir) if out_dir is not None else None
        self.stats: list[RunStats] = []
        self.best: tuple[float, int] | None = None
        self._fh = None
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)
            (self.dir / "config.ini").write_text(dump_config(config))
            self._fh = (self.dir / "stats.jsonl").open("w")

    def record(self, stats: RunStats, params: ModelParameters, final: bool = False) -> None:
        io, ev = self.config.io, self.config.eval
        if final or stats.update % io.stats_every == 0:
            self.stats.append(stats)
            if self._fh:
                self._fh.write(json.dumps(stats.to_record(), sort_keys=True) + "\n")
                self._fh.flush()
        if self.dir is None or final:
            return
        if io.checkpoint_every and stats.update and stats.update % io.checkpoint_every == 0:
            save_checkpoint(self.dir / "checkpoints" / f"ckpt_{params.version:06d}.bin", params, self.config.hash)
        if ev.every and stats.update and stats.update % ev.every == 0:
            from ..metrics import evaluate

            report = evaluate(params, self.config, ev.episodes_during_training, ev.seed)
            with (self.dir / "eval.jsonl").open("a") as fh:
                fh.write(json.dumps({"update": stats.update, "version": params.version, **report.means},
                                    sort_keys=True) + "\n")
            if self.best is None or report["success"] > self.best[0]:
                self.best = (report["success"], params.version)
                save_checkpoint(self.dir / "best.ckpt", params, self.config.hash)

    def finish(self, params: ModelParameters, extra: dict) -> dict:
        final = self.stats[-1] if self.stats else RunStats()
        manifest = {
            "config_hash": self.config.hash, "seed": self.config.runtime.seed,
            "env_seeds": [env_seed(self.config, a, s) for a in range(self.config.runtime.actors)
                          for s in range(self.config.runtime.envs_per_actor)],
            "algo": self.config.algo.name, "mode": self.config.network.mode,
            "final_version": params.version, "updates": final.update, "env_steps": final.env_steps,
            "produced": final.produced, "consumed": final.consumed, "discarded": final.discarded,
            "queued": final.queued, "discard_fraction": final.discard_fraction,
            "elapsed": final.elapsed, "env_steps_per_sec": final.env_steps_per_sec,
            "best": None if self.best is None else {"success": self.best[0], "version": self.best[1]},
            **extra,
        }
        if self._fh:
            self._fh.close()
        if self.dir is not None:
            path = save_checkpoint(self.dir / "final.ckpt", params, self.config.hash)
            manifest["checkpoint"] = str(path)
            (self.dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return manifest


def _budget_left(config: RunConfig, learner: Learner, start: float) -> bool:
    rt = config.runtime
    if rt.budget and learner.updates >= rt.budget:
        return False
    if rt.time_budget and time.perf_counter() - start >= rt.time_budget:
        return False
    return True


def run_deterministic(config: RunConfig, out_dir=None, initial: ModelParameters | None = None) -> TrainResult:
    """Single-threaded round-robin actors and learner; reproducible."""
    net = PolicyNetwork(config.network_config)
    params = initial or net.init_params(config.runtime.seed)
    store = ParameterStore(params)
    learner = Learner(config, net, params)
    actors = [make_collectors(config, net, a) for a in range(config.runtime.actors)]
    progress, outputs = _Progress(), _Outputs(config, out_dir)
    start = time.perf_counter()
    while _budget_left(config, learner, start):
        for collectors in actors:
            for c in collectors:
                snapshot, _ = store.fetch()
                before = c.env_steps
                for seg in c.collect(snapshot):
                    learner.buffer.push(seg)
                progress.add(*_drain(c, before))
                while _budget_left(config, learner, start) and learner.step(timeout=0):
                    store.publish(learner.params)
                    outputs.record(_stats(learner, progress, start), learner.params)
    final = _stats(learner, progress, start)
    outputs.record(final, learner.params, final=True)
    manifest = outputs.finish(learner.params, {"deterministic": True, "actors": config.runtime.actors})
    return TrainResult(learner.params, outputs.stats, manifest, outputs.dir)


def _actor_main(actor: int, config: RunConfig, store: SharedParameterStore, out_q, stop) -> None:
    """Actor process: fetch snapshot, collect one horizon, ship segments; repeat."""
    try:
        net = PolicyNetwork(config.network_config)
        collectors = make_collectors(config, net, actor)
        while not stop.is_set():
            for c in collectors:
                snapshot, _ = store.fetch()
                before = c.env_steps
                segments = c.collect(snapshot)
                steps, episodes = _drain(c, before)
                while not stop.is_set():
                    try:
                        out_q.put(("data", actor, segments, steps, episodes), timeout=0.1)
                        break
                    except queue.Full:
                        continue
    except BaseException:
        out_q.put(("error", actor, traceback.format_exc(), 0, []))


def run_async(config: RunConfig, out_dir=None, initial: ModelParameters | None = None,
              start_method: str | None = None) -> TrainResult:
    """Actor processes feeding one learner through the staleness buffer."""
    ctx = mp.get_context(start_method or ("fork" if "fork" in mp.get_all_start_methods() else "spawn"))
    net = PolicyNetwork(config.network_config)
    params = initial or net.init_params(config.runtime.seed)
    store = SharedParameterStore(params, ctx)
    learner = Learner(config, net, params)
    progress, outputs = _Progress(), _Outputs(config, out_dir)
    out_q = ctx.Queue(maxsize=4 * config.runtime.actors)
    stop = ctx.Event()
    errors: list[str] = []
    lock = threading.Lock()
    procs = [ctx.Process(target=_actor_main, args=(a, config, store, out_q, stop), daemon=True)
             for a in range(config.runtime.actors)]

    def feed():
        while True:
            try:
                kind, actor, payload, steps, episodes = out_q.get(timeout=0.1)
            except queue.Empty:
                if stop.is_set() and not any(p.is_alive() for p in procs):
                    return
                dead = [p for p in procs if p.exitcode not in (None, 0)]
                if dead and not stop.is_set():
                    errors.append(f"actor process exited with code {dead[0].exitcode}")
                    learner.buffer.close()
                    return
                continue
            if kind == "error":
                errors.append(f"actor {actor} crashed:\n{payload}")
                learner.buffer.close()
                return
            with lock:
                progress.add(steps, episodes)
            for seg in payload:
                learner.buffer.push(seg)

    start = time.perf_counter()
    for p in procs:
        p.start()
    feeder = threading.Thread(target=feed, daemon=True)
    feeder.start()
    try:
        while _budget_left(config, learner, start) and not errors:
            if learner.algo.on_policy:
                updated = learner.step(timeout=0.5)
            else:
                updated = learner.step()
                if not updated:
                    time.sleep(0.01)
            if updated:
                store.publish(learner.params)
                with lock:
                    stats = _stats(learner, progress, start)
                outputs.record(stats, learner.params)
    finally:
        stop.set()
        learner.buffer.close()
        feeder.join(timeout=10)
        for p in procs:
            p.join(timeout=5)
            if p.is_alive():
                p.terminate()
                p.join()
    if errors:
        raise RuntimeError(errors[0])
    final = _stats(learner, progress, start)
    outputs.record(final, learner.params, final=True)
    manifest = outputs.finish(learner.params, {"deterministic": False, "actors": config.runtime.actors})
    return TrainResult(learner.params, outputs.stats, manifest, outputs.dir)


def run_training(config: RunConfig, out_dir=None, initial: ModelParameters | None = None) -> TrainResult:
    """Train per ``config``; writes stats, checkpoints and a manifest when ``out_dir`` is set."""
    if config.runtime.deterministic:
        return run_deterministic(config, out_dir, initial)
    return run_async(config, out_dir, initial)


def benchmark_throughput(config: RunConfig, actor_counts=(1, 8), seconds: float = 20.0) -> dict[int, RunStats]:
    """Measured env-steps/sec of full asynchronous runs at several actor counts."""
    results = {}
    for n in actor_counts:
        cfg = config.replace(runtime={"actors": n, "deterministic": False, "budget": 0, "time_budget": seconds})
        results[n] = run_async(cfg).final
    return results
