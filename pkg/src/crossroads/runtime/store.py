"""Versioned parameter stores with atomic snapshot publication."""
from __future__ import annotations

import multiprocessing as mp
import threading

import numpy as np

from ..policy.params import ModelParameters


def _check_finite(params: ModelParameters) -> None:
    if not np.all(np.isfinite(params.values)):
        raise ValueError("refusing to publish non-finite parameters")


class ParameterStore:
    """Single-writer / multi-reader store for threads in one process.

    Snapshots are immutable; publishing swaps a reference under a lock, so a
    reader always holds one complete snapshot.
    """

    def __init__(self, initial: ModelParameters):
        _check_finite(initial)
        self._lock = threading.Lock()
        self._snapshot = initial

    @property
    def version(self) -> int:
        return self._snapshot.version

    def publish(self, params: ModelParameters) -> int:
        _check_finite(params)
        with self._lock:
            version = self._snapshot.version + 1
            if params.version != version:
                params = params.evolve(params.values, version)
            self._snapshot = params
            return version

    def fetch(self) -> tuple[ModelParameters, int]:
        with self._lock:
            snap = self._snapshot
        return snap, snap.version


class SharedParameterStore:
    """Cross-process store backed by shared memory.

    Writes and reads copy the whole vector while holding one lock, so actors
    in other processes never observe a torn mix of two versions.
    """

    def __init__(self, initial: ModelParameters, ctx=None):
        _check_finite(initial)
        ctx = ctx or mp.get_context()
        self.layout = initial.layout
        self._lock = ctx.Lock()
        self._values = ctx.RawArray("f", initial.values.size)
        self._version = ctx.RawValue("q", initial.version)
        np.frombuffer(self._values, dtype=np.float32)[:] = initial.values

    @property
    def version(self) -> int:
        return self._version.value

    def publish(self, params: ModelParameters) -> int:
        _check_finite(params)
        with self._lock:
            np.frombuffer(self._values, dtype=np.float32)[:] = params.values
            self._version.value += 1
            return self._version.value

    def fetch(self) -> tuple[ModelParameters, int]:
        with self._lock:
            values = np.frombuffer(self._values, dtype=np.float32).copy()
            version = self._version.value
        return ModelParameters(values, self.layout, version), version


def publish_params(store, params: ModelParameters) -> int:
    return store.publish(params)


def fetch_latest(store) -> tuple[ModelParameters, int]:
    return store.fetch()
