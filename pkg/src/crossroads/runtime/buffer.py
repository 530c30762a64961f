"""Central data buffer with version-staleness eviction."""
from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass

import numpy as np

from ..algos.offpolicy import ReplayBatch
from .segment import TrajectorySegment

FIFO, REPLAY = "fifo", "replay"


@dataclass(frozen=True)
class BufferConfig:
    horizon: int = 32
    batch_segments: int = 64
    capacity: int = 1024
    max_avg_version_gap: float = 8.0
    mode: str = FIFO
    replay_capacity: int = 100_000

    def __post_init__(self):
        if self.capacity < self.batch_segments:
            raise ValueError("capacity must be >= batch_segments")
        if self.max_avg_version_gap < 0:
            raise ValueError("max_avg_version_gap must be >= 0")
        if self.mode not in (FIFO, REPLAY):
            raise ValueError(f"mode must be {FIFO!r} or {REPLAY!r}")
        if self.horizon < 1 or self.batch_segments < 1:
            raise ValueError("horizon and batch_segments must be positive")


class SegmentBuffer:
    """Multi-producer / single-consumer queue of trajectory segments.

    FIFO mode keeps whole segments for on-policy learners and enforces the
    staleness bound when a batch is drawn. Replay mode unrolls segments into a
    transition ring that off-policy learners sample uniformly.
    Counters satisfy ``produced == consumed + discarded + queued``.
    """

    def __init__(self, config: BufferConfig = BufferConfig(), seed: int = 0):
        self.config = config
        self._queue: deque[TrajectorySegment] = deque()
        self._cond = threading.Condition()
        self._rng = np.random.default_rng(seed)
        self._ring: dict[str, np.ndarray] | None = None
        self._ring_size = 0
        self._ring_pos = 0
        self.produced = 0
        self.consumed = 0
        self.discarded = 0
        self.last_mean_gap = 0.0
        self.closed = False

    def __len__(self) -> int:
        return len(self._queue) if self.config.mode == FIFO else self._ring_size

    @property
    def queued(self) -> int:
        return len(self._queue)

    @property
    def discard_fraction(self) -> float:
        return self.discarded / self.produced if self.produced else 0.0

    def close(self) -> None:
        with self._cond:
            self.closed = True
            self._cond.notify_all()

    # -- producers --------------------------------------------------------
    def push(self, segment: TrajectorySegment) -> bool:
        try:
            segment.validate(self.config.horizon)
        except ValueError:
            return False
        with self._cond:
            self.produced += 1
            if self.config.mode == REPLAY:
                self._ring_write(segment)
                self.consumed += 1
            else:
                self._queue.append(segment)
                while len(self._queue) > self.config.capacity:
                    self._queue.popleft()
                    self.discarded += 1
            self._cond.notify_all()
        return True

    def _ring_write(self, segment: TrajectorySegment) -> None:
        obs, act, rew, nxt, done = segment.transitions()
        cap = self.config.replay_capacity
        if self._ring is None:
            d = obs.shape[1]
            self._ring = {"obs": np.zeros((cap, d)), "actions": np.zeros((cap, 2)), "rewards": np.zeros(cap),
                          "next_obs": np.zeros((cap, d)), "dones": np.zeros(cap)}
        for k in range(len(rew)):
            p = self._ring_pos
            self._ring["obs"][p] = obs[k]
            self._ring["actions"][p] = act[k]
            self._ring["rewards"][p] = rew[k]
            self._ring["next_obs"][p] = nxt[k]
            self._ring["dones"][p] = done[k]
            self._ring_pos = (p + 1) % cap
            self._ring_size = min(self._ring_size + 1, cap)

    # -- consumer ---------------------------------------------------------
    def _evict_stale(self, current_version: int) -> None:
        # running sum over the window of the (up to) n oldest segments
        n = self.config.batch_segments
        q = self._queue
        width = min(n, len(q))
        total = sum(current_version - q[k].model_version for k in range(width))
        while width:
            if total / width <= self.config.max_avg_version_gap:
                return
            total -= current_version - q.popleft().model_version
            self.discarded += 1
            if len(q) >= n:
                total += current_version - q[n - 1].model_version
            else:
                width -= 1

    def try_sample(self, current_version: int) -> list[TrajectorySegment] | None:
        """Staleness-checked batch of ``batch_segments`` oldest segments, or None."""
        if self.config.mode != FIFO:
            raise ValueError("try_sample() is for FIFO mode; use sample_replay()")
        with self._cond:
            return self._take(current_version)

    def _take(self, current_version: int):
        self._evict_stale(current_version)
        n = self.config.batch_segments
        if len(self._queue) < n:
            return None
        batch = [self._queue.popleft() for _ in range(n)]
        self.consumed += n
        self.last_mean_gap = float(np.mean([current_version - s.model_version for s in batch]))
        return batch

    def sample_batch(self, current_version: int, timeout: float | None = None) -> list[TrajectorySegment] | None:
        """Block until a fresh-enough batch exists (or timeout / close)."""
        with self._cond:
            while True:
                batch = self._take(current_version)
                if batch is not None or self.closed:
                    return batch
                if not self._cond.wait(timeout):
                    return None

    def sample_replay(self, batch_size: int) -> ReplayBatch | None:
        with self._cond:
            if self._ring_size == 0:
                return None
            idx = self._rng.integers(0, self._ring_size, batch_size)
            r = self._ring
            return ReplayBatch(r["obs"][idx], r["actions"][idx], r["rewards"][idx], r["next_obs"][idx],
                               r["dones"][idx])

    def accounting(self) -> dict:
        with self._cond:
            return {"produced": self.produced, "consumed": self.consumed, "discarded": self.discarded,
                    "queued": len(self._queue)}
