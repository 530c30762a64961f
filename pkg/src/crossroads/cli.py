"""Command line entry point: ``crossroads {train,evaluate,render,inspect}``.

Exit codes: 0 success, 1 validation error (bad config, checkpoint or log),
2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, RunConfig, dump_config, parse_config

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _load_config(args) -> RunConfig:
    overrides: dict[str, dict] = {"runtime": {}, "io": {}, "eval": {}}
    if getattr(args, "seed", None) is not None:
        overrides["runtime"]["seed"] = args.seed
        overrides["eval"]["seed"] = args.seed
    if getattr(args, "deterministic", False):
        overrides["runtime"]["deterministic"] = True
    if getattr(args, "actors", None) is not None:
        overrides["runtime"]["actors"] = args.actors
    if getattr(args, "budget", None) is not None:
        overrides["runtime"]["budget"] = args.budget
    if getattr(args, "out", None) is not None:
        overrides["io"]["out_dir"] = args.out
    if args.config is not None and not Path(args.config).is_file():
        raise ConfigError(f"config file not found: {args.config}")
    return parse_config(args.config, overrides={k: v for k, v in overrides.items() if v})


def cmd_train(args) -> int:
    from .runtime.trainer import run_training

    config = _load_config(args)
    result = run_training(config, config.io.out_dir)
    print(json.dumps(result.manifest, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .metrics import evaluate

    config = _load_config(args)
    out = Path(config.io.out_dir)
    report = evaluate(args.checkpoint, config, args.episodes, log_dir=out / "logs" if args.logs else None)
    report.write_json(out / "metrics.json")
    report.write_csv(out / "metrics.csv")
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_render(args) -> int:
    from .env import TrajectoryLog
    from .render import render_frames

    try:
        log = TrajectoryLog.read(args.log)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read log {args.log}: {exc}") from None
    paths = render_frames(log, args.out or "frames", scale=args.scale, front_sector=args.front_sector)
    print(f"wrote {len(paths)} frames to {args.out or 'frames'}")
    return EXIT_OK


def _inspect_path(path: Path) -> dict:
    if path.is_dir():
        manifest = path / "manifest.json"
        if not manifest.is_file():
            raise ValueError(f"{path} has no manifest.json")
        return json.loads(manifest.read_text())
    if path.suffix in (".ckpt", ".bin"):
        params, header = load_checkpoint(path)
        v = params.values
        return {**{k: header[k] for k in ("version", "config_hash", "n_values", "crc32", "layout")},
                "meta": header.get("meta", {}),
                "values": {"min": float(v.min()), "max": float(v.max()), "mean": float(v.mean()),
                           "l2": float(np.linalg.norm(v))}}
    if path.suffix == ".jsonl":
        lines = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
        if not lines:
            return {"records": 0}
        return {"records": len(lines), "last": lines[-1]}
    if path.suffix in (".ini", ".cfg"):
        config = parse_config(path)
        return {"config_hash": config.hash, "config": config.to_dict()}
    raise ValueError(f"don't know how to inspect {path}")


def cmd_inspect(args) -> int:
    if args.path is None:
        config = _load_config(args)
        print(f"# config hash {config.hash}")
        print(dump_config(config))
        return EXIT_OK
    path = Path(args.path)
    if not path.exists():
        raise ValueError(f"no such file: {path}")
    print(json.dumps(_inspect_path(path), indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crossroads", description="Multi-agent intersection training toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="INI config file (defaults apply to absent keys)")
        if seed:
            p.add_argument("--seed", type=int, help="run / evaluation base seed")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("train", help="train a policy")
    common(p)
    p.add_argument("--deterministic", action="store_true", help="single-process round-robin mode")
    p.add_argument("--actors", type=int, help="number of actor workers")
    p.add_argument("--budget", type=int, help="number of learner updates")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint with deterministic actions")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, help="episodes (default from config)")
    p.add_argument("--logs", action="store_true", help="also write per-episode trajectory logs")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", help="render a trajectory log to PPM frames")
    p.add_argument("--log", required=True)
    p.add_argument("--out", help="frame directory (default ./frames)")
    p.add_argument("--scale", type=float, default=4.0, help="pixels per meter")
    p.add_argument("--front-sector", action="store_true", help="overlay the front lidar sector")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("inspect", help="dump a checkpoint, run directory, stats stream or config")
    p.add_argument("path", nargs="?")
    common(p)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - surfaced as a runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
