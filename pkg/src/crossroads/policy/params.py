"""Flat, versioned parameter vectors and their layout descriptors."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class LayerSpec:
    """One parameter block. Dense layers store W (in x out, row-major) then b."""

    name: str
    in_dim: int
    out_dim: int
    role: str = "dense"

    @property
    def size(self) -> int:
        if self.role == "vector":
            return self.out_dim
        return self.in_dim * self.out_dim + self.out_dim


def layout_size(layout) -> int:
    return sum(spec.size for spec in layout)


def unpack(flat: np.ndarray, layout) -> dict[str, object]:
    """Views into ``flat``: dense blocks map to ``(W, b)``, vectors to arrays."""
    out, k = {}, 0
    for spec in layout:
        if spec.role == "vector":
            out[spec.name] = flat[k:k + spec.out_dim]
        else:
            n = spec.in_dim * spec.out_dim
            W = flat[k:k + n].reshape(spec.in_dim, spec.out_dim)
            b = flat[k + n:k + n + spec.out_dim]
            out[spec.name] = (W, b)
        k += spec.size
    return out


@dataclass(frozen=True, eq=False)
class ModelParameters:
    values: np.ndarray
    layout: tuple[LayerSpec, ...]
    version: int = 0

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float32)
        if v.ndim != 1 or v.size != layout_size(self.layout):
            raise ValueError(f"expected {layout_size(self.layout)} values, got {v.size}")
        if self.version < 0:
            raise ValueError("version must be non-negative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "layout", tuple(self.layout))

    def __len__(self) -> int:
        return self.values.size

    def as_float64(self) -> np.ndarray:
        return self.values.astype(np.float64)

    def evolve(self, values, version: int | None = None) -> "ModelParameters":
        return ModelParameters(np.asarray(values), self.layout, self.version + 1 if version is None else version)

    def equals(self, other: "ModelParameters") -> bool:
        return (self.version == other.version and self.layout == other.layout
                and np.array_equal(self.values, other.values))
