"""Portable binary checkpoints for policy parameters.

Byte layout (all integers little-endian)::

    offset  size  content
    0       8     magic b"XRDCKPT1"
    8       4     header length H (uint32)
    12      H     UTF-8 JSON header
    12+H    4*N   N float32 parameter values

The header holds ``format`` (1), ``layout`` (list of
``[name, in_dim, out_dim, role]``), ``version``, ``config_hash``,
``n_values``, ``crc32`` of the value bytes, and a free-form ``meta`` dict.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .policy.params import LayerSpec, ModelParameters

MAGIC = b"XRDCKPT1"
FORMAT = 1


class CheckpointError(ValueError):
    """Unreadable, truncated or corrupted checkpoint."""


def encode(params: ModelParameters, config_hash: str = "", meta: dict | None = None) -> bytes:
    body = params.values.astype("<f4").tobytes()
    header = {
        "format": FORMAT,
        "layout": [[s.name, s.in_dim, s.out_dim, s.role] for s in params.layout],
        "version": int(params.version),
        "config_hash": config_hash,
        "n_values": int(params.values.size),
        "crc32": zlib.crc32(body),
        "meta": meta or {},
    }
    head = json.dumps(header, sort_keys=True).encode()
    return MAGIC + struct.pack("<I", len(head)) + head + body


def decode(blob: bytes) -> tuple[ModelParameters, dict]:
    """Parse checkpoint bytes into parameters and the header dict."""
    if len(blob) < len(MAGIC) + 4 or blob[:len(MAGIC)] != MAGIC:
        raise CheckpointError("bad magic: not a checkpoint file")
    (n_head,) = struct.unpack_from("<I", blob, len(MAGIC))
    start = len(MAGIC) + 4
    if len(blob) < start + n_head:
        raise CheckpointError("truncated header")
    try:
        header = json.loads(blob[start:start + n_head].decode())
        layout = tuple(LayerSpec(str(n), int(i), int(o), str(r)) for n, i, o, r in header["layout"])
        n_values = int(header["n_values"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"corrupted header: {exc}") from None
    if header.get("format") != FORMAT:
        raise CheckpointError(f"unsupported checkpoint format {header.get('format')!r}")
    body = blob[start + n_head:]
    if len(body) != 4 * n_values:
        raise CheckpointError(f"truncated body: expected {4 * n_values} bytes, found {len(body)}")
    if zlib.crc32(body) != header.get("crc32"):
        raise CheckpointError("checksum mismatch: parameter bytes are corrupted")
    values = np.frombuffer(body, dtype="<f4").astype(np.float32)
    try:
        params = ModelParameters(values, layout, int(header["version"]))
    except ValueError as exc:
        raise CheckpointError(f"layout does not match values: {exc}") from None
    return params, header


def save_checkpoint(path, params: ModelParameters, config_hash: str = "", meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode(params, config_hash, meta))
    tmp.replace(path)
    return path


def load_checkpoint(path) -> tuple[ModelParameters, dict]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    return decode(blob)
