"""Run configuration: sectioned INI text, defaults, validation and hashing.

A config file looks like::

    [sim]
    n_vehicles = 4
    arm_length = 30

    [algo]
    name = ppo
    lr = 1e-3

Absent keys take their defaults, unknown keys are errors. Any key can be
overridden from the environment as ``CROSSROADS_<SECTION>__<KEY>``, e.g.
``CROSSROADS_RUNTIME__ACTORS=8``.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .algos.batch import Hyperparams
from .policy.network import CTCE, NetworkConfig
from .rewards import RewardConfig
from .sim.vehicle import Dynamics
from .sim.world import SimConfig

ENV_PREFIX = "CROSSROADS_"
ALGOS = ("ppo", "sac", "ddpg")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass(frozen=True)
class NetworkSection:
    hidden_sizes: tuple[int, ...] = (256, 256)
    mode: str = "ctde"
    pool_radius: float | None = None

    def build(self, obs_dim: int) -> NetworkConfig:
        return NetworkConfig(obs_dim=obs_dim, hidden_sizes=self.hidden_sizes, mode=self.mode,
                             pool_radius=self.pool_radius)


@dataclass(frozen=True)
class AlgoSection:
    name: str = "ppo"
    hyper: Hyperparams = field(default_factory=Hyperparams)

    def __post_init__(self):
        if self.name not in ALGOS:
            raise ConfigError(f"algo.name: must be one of {', '.join(ALGOS)} (got {self.name!r})")


@dataclass(frozen=True)
class RuntimeConfig:
    actors: int = 1
    envs_per_actor: int = 1
    horizon: int = 32
    batch_segments: int = 64
    capacity: int = 1024
    max_avg_version_gap: float = 8.0
    replay_capacity: int = 100_000
    budget: int = 100
    time_budget: float = 0.0
    deterministic: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in ("actors", "envs_per_actor", "horizon", "batch_segments", "replay_capacity"):
            if getattr(self, name) < 1:
                raise ConfigError(f"runtime.{name}: must be >= 1")
        if self.capacity < self.batch_segments:
            raise ConfigError("runtime.capacity: must be >= runtime.batch_segments")
        if self.max_avg_version_gap < 0:
            raise ConfigError("runtime.max_avg_version_gap: must be >= 0")
        if self.budget < 0 or self.time_budget < 0:
            raise ConfigError("runtime.budget: budgets must be >= 0")
        if self.budget == 0 and self.time_budget == 0:
            raise ConfigError("runtime.budget: need an update budget or a time_budget")


@dataclass(frozen=True)
class EvalConfig:
    episodes: int = 100
    seed: int = 10_000
    every: int = 0
    episodes_during_training: int = 5

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigError("eval.episodes: must be >= 1")
        if self.every < 0 or self.episodes_during_training < 1:
            raise ConfigError("eval.every: must be >= 0 (episodes_during_training >= 1)")


@dataclass(frozen=True)
class IOConfig:
    out_dir: str = "runs/default"
    stats_every: int = 1
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.stats_every < 1:
            raise ConfigError("io.stats_every: must be >= 1")
        if self.checkpoint_every < 0:
            raise ConfigError("io.checkpoint_every: must be >= 0")


@dataclass(frozen=True)
class RunConfig:
    sim: SimConfig = field(default_factory=SimConfig)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    network: NetworkSection = field(default_factory=NetworkSection)
    algo: AlgoSection = field(default_factory=AlgoSection)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    io: IOConfig = field(default_factory=IOConfig)

    def __post_init__(self):
        if self.algo.name != "ppo" and self.network.mode == CTCE:
            raise ConfigError(f"network.mode: {self.algo.name} supports only ctde actors")

    @property
    def network_config(self) -> NetworkConfig:
        return self.network.build(self.sim.obs_dim)

    def to_dict(self) -> dict:
        return to_sections(self)

    @property
    def hash(self) -> str:
        return config_hash(self)

    def replace(self, **sections: Mapping[str, Any]) -> "RunConfig":
        """Copy with some keys changed, e.g. ``replace(runtime={"actors": 8})``."""
        data = self.to_dict()
        for name, values in sections.items():
            if name not in data:
                raise ConfigError(f"unknown section [{name}]")
            data[name].update(values)
        return from_sections(data)


# -- flat section views --------------------------------------------------------

_SECTION_TYPES = {
    "sim": (SimConfig, Dynamics), "rewards": (RewardConfig,), "network": (NetworkSection,),
    "algo": (AlgoSection, Hyperparams), "runtime": (RuntimeConfig,), "eval": (EvalConfig,), "io": (IOConfig,),
}
_NESTED = {"sim": "dynamics", "algo": "hyper"}


def _schema(section: str) -> dict[str, dataclasses.Field]:
    out = {}
    for cls in _SECTION_TYPES[section]:
        for f in dataclasses.fields(cls):
            if f.name != _NESTED.get(section):
                out[f.name] = f
    return out


def _default(f: dataclasses.Field):
    if f.default is not dataclasses.MISSING:
        return f.default
    return f.default_factory()


def _jsonable(value):
    return list(value) if isinstance(value, tuple) else value


def to_sections(config: RunConfig) -> dict[str, dict]:
    """Flat ``{section: {key: value}}`` view with every key present."""
    out = {}
    for section in _SECTION_TYPES:
        obj = getattr(config, section)
        flat = {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                if f.name != _NESTED.get(section)}
        nested = _NESTED.get(section)
        if nested:
            sub = getattr(obj, nested)
            flat.update({f.name: _jsonable(getattr(sub, f.name)) for f in dataclasses.fields(sub)})
        out[section] = flat
    return out


def _coerce(section: str, key: str, f: dataclasses.Field, raw):
    """Convert a raw (usually string) value to the field's declared type."""
    where = f"{section}.{key}"
    kind = str(f.type)
    if raw is None:
        if "None" in kind:
            return None
        raise ConfigError(f"{where}: value required")
    text = raw.strip() if isinstance(raw, str) else raw
    try:
        if "None" in kind and isinstance(text, str) and text.lower() in ("", "none", "null"):
            return None
        if kind.startswith("tuple"):
            if isinstance(text, str):
                text = [t for t in text.replace("[", "").replace("]", "").replace(",", " ").split()]
            return tuple(int(t) for t in text)
        if kind.startswith("bool"):
            if isinstance(text, bool):
                return text
            lowered = str(text).lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if kind.startswith("int"):
            if isinstance(text, float) and not text.is_integer():
                raise ValueError(f"not an integer: {text!r}")
            if isinstance(text, str) and not text.lstrip("+-").isdigit():
                raise ValueError(f"not an integer: {text!r}")
            return int(text)
        if kind.startswith("float"):
            return float(text)
        return str(text)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def from_sections(data: Mapping[str, Mapping[str, Any]]) -> RunConfig:
    """Build and validate a RunConfig from a (partial) flat section mapping."""
    built = {}
    for section, values in data.items():
        if section not in _SECTION_TYPES:
            raise ConfigError(f"unknown section [{section}]; expected one of {', '.join(_SECTION_TYPES)}")
        schema = _schema(section)
        typed = {}
        for key, raw in values.items():
            if key not in schema:
                raise ConfigError(f"{section}.{key}: unknown key")
            typed[key] = _coerce(section, key, schema[key], raw)
        built[section] = typed
    return _assemble(built)


def _assemble(built: dict[str, dict]) -> RunConfig:
    kwargs = {}
    for section, classes in _SECTION_TYPES.items():
        values = dict(built.get(section, {}))
        outer, *inner = classes
        try:
            if inner:
                names = {f.name for f in dataclasses.fields(inner[0])}
                sub = inner[0](**{k: values.pop(k) for k in list(values) if k in names})
                values[_NESTED[section]] = sub
            kwargs[section] = outer(**values)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}] {exc}") from None
    try:
        return RunConfig(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def env_overrides(environ: Mapping[str, str] | None = None) -> dict[str, dict[str, str]]:
    environ = os.environ if environ is None else environ
    out: dict[str, dict[str, str]] = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX) or "__" not in name[len(ENV_PREFIX):]:
            continue
        section, key = name[len(ENV_PREFIX):].split("__", 1)
        out.setdefault(section.lower(), {})[key.lower()] = value
    return out


def parse_config(source: str | os.PathLike | None = None, environ: Mapping[str, str] | None = None,
                 overrides: Mapping[str, Mapping[str, Any]] | None = None) -> RunConfig:
    """Parse INI text or a file path; then apply environment and explicit overrides.

    Pass ``environ={}`` to ignore the process environment.
    """
    text = ""
    if source is not None:
        src = str(source)
        if "\n" not in src and "[" not in src and Path(src).is_file():
            text = Path(src).read_text()
        elif isinstance(source, os.PathLike):
            raise ConfigError(f"config file not found: {src}")
        else:
            text = src
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str.lower
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    data: dict[str, dict[str, Any]] = {s: dict(parser.items(s)) for s in parser.sections()}
    for extra in (env_overrides(environ), overrides or {}):
        for section, values in extra.items():
            data.setdefault(section, {}).update(values)
    return from_sections(data)


def dump_config(config: RunConfig) -> str:
    """INI text that parses back to an equal config."""
    lines = []
    for section, values in config.to_dict().items():
        lines.append(f"[{section}]")
        for key, value in values.items():
            if isinstance(value, list):
                value = ", ".join(str(v) for v in value)
            lines.append(f"{key} = {'none' if value is None else value}")
        lines.append("")
    return "\n".join(lines)


def config_hash(config: RunConfig) -> str:
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()
