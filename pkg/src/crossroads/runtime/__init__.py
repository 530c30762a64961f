"""Actor/learner runtime: segments, staleness buffer, parameter stores, trainer.

Names are resolved lazily so that learner modules can import
:mod:`crossroads.runtime.segment` without pulling in the trainer.
"""
from importlib import import_module

_EXPORTS = {
    "TrajectorySegment": "segment",
    "BufferConfig": "buffer", "SegmentBuffer": "buffer",
    "ParameterStore": "store", "SharedParameterStore": "store", "publish_params": "store", "fetch_latest": "store",
    "Collector": "collector", "neighbor_mask": "collector",
    "RunStats": "trainer", "TrainResult": "trainer", "run_training": "trainer", "run_deterministic": "trainer",
    "run_async": "trainer", "benchmark_throughput": "trainer",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name):
    if name in _EXPORTS:
        return getattr(import_module(f".{_EXPORTS[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
