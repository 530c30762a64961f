"""Top-down raster frames (binary PPM) from a trajectory log.

Fixed palette, RGB:

=============  ===============
grass          ( 46,  94,  46)
road           (110, 110, 110)
lane marking   (230, 230, 230)
conflict zone  (255, 215,   0)  outline
normal         ( 30, 144, 255)
in contact     (220,  20,  60)
off road       (255, 140,   0)
arrived        ( 50, 205,  50)
front sector   (255, 255, 255)  optional overlay
=============  ===============

Contact takes precedence over off-road, which takes precedence over normal.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .env import TrajectoryLog
from .sim.geometry import MapGeometry, box_corners

PALETTE = {
    "grass": (46, 94, 46),
    "road": (110, 110, 110),
    "marking": (230, 230, 230),
    "conflict_zone": (255, 215, 0),
    "normal": (30, 144, 255),
    "contact": (220, 20, 60),
    "off_road": (255, 140, 0),
    "arrived": (50, 205, 50),
    "front_sector": (255, 255, 255),
}


def vehicle_color(record: dict) -> tuple[int, int, int]:
    if record.get("arrived"):
        return PALETTE["arrived"]
    if record.get("in_contact"):
        return PALETTE["contact"]
    if record.get("off_road"):
        return PALETTE["off_road"]
    return PALETTE["normal"]


def write_ppm(path, image: np.ndarray) -> Path:
    path = Path(path)
    h, w, _ = image.shape
    path.write_bytes(f"P6\n{w} {h}\n255\n".encode() + np.ascontiguousarray(image, dtype=np.uint8).tobytes())
    return path


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6":
        raise ValueError(f"{path} is not a binary PPM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4][: w * h * 3], dtype=np.uint8).reshape(h, w, 3)


class Canvas:
    """World meters to pixel grid; y grows upward in the world, downward in the image."""

    def __init__(self, geometry: MapGeometry, scale: float):
        self.geometry = geometry
        self.scale = scale
        self.extent = geometry.extent
        self.size = int(math.ceil(2 * self.extent * scale))
        centers = (np.arange(self.size) + 0.5) / scale - self.extent
        self.xs, self.ys = np.meshgrid(centers, centers[::-1])
        self.background = self._background()

    def _background(self) -> np.ndarray:
        img = np.empty((self.size, self.size, 3), dtype=np.uint8)
        img[:] = PALETTE["grass"]
        pts = np.stack([self.xs.ravel(), self.ys.ravel()], axis=1)
        img[self.geometry.on_road(pts).reshape(self.size, self.size)] = PALETTE["road"]
        # centre lines of each arm outside the zone
        h, px = self.geometry.half_width, 0.5 / self.scale
        centre = ((np.abs(self.ys) <= px) & (np.abs(self.xs) > h)) | ((np.abs(self.xs) <= px) & (np.abs(self.ys) > h))
        img[centre & self.geometry.on_road(pts).reshape(self.size, self.size)] = PALETTE["marking"]
        border = (np.abs(np.maximum(np.abs(self.xs), np.abs(self.ys)) - h) <= px)
        img[border] = PALETTE["conflict_zone"]
        return img

    def to_pixel(self, x: float, y: float) -> tuple[int, int]:
        col = int(math.floor((x + self.extent) * self.scale))
        row = int(math.floor((self.extent - y) * self.scale))
        return row, col

    def fill_box(self, img, corners: np.ndarray, color) -> None:
        """Paint pixels whose centers lie inside a convex counterclockwise quad."""
        lo, hi = corners.min(0), corners.max(0)
        r0, c0 = self.to_pixel(lo[0], hi[1])
        r1, c1 = self.to_pixel(hi[0], lo[1])
        r0, c0 = max(r0, 0), max(c0, 0)
        r1, c1 = min(r1, self.size - 1), min(c1, self.size - 1)
        if r0 > r1 or c0 > c1:
            return
        xs, ys = self.xs[r0:r1 + 1, c0:c1 + 1], self.ys[r0:r1 + 1, c0:c1 + 1]
        inside = np.ones(xs.shape, dtype=bool)
        for k in range(4):
            a, b = corners[k], corners[(k + 1) % 4]
            inside &= (b[0] - a[0]) * (ys - a[1]) - (b[1] - a[1]) * (xs - a[0]) >= 0
        img[r0:r1 + 1, c0:c1 + 1][inside] = color

    def line(self, img, p, q, color) -> None:
        n = max(2, int(math.hypot(q[0] - p[0], q[1] - p[1]) * self.scale * 2))
        for t in np.linspace(0.0, 1.0, n):
            r, c = self.to_pixel(p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))
            if 0 <= r < self.size and 0 <= c < self.size:
                img[r, c] = color


def render_frame(canvas: Canvas, records: list[dict], meta: dict, front_sector: bool = False) -> np.ndarray:
    img = canvas.background.copy()
    length, width = meta.get("vehicle_length", 4.5), meta.get("vehicle_width", 2.0)
    for r in sorted(records, key=lambda r: r["agent"]):
        corners = box_corners(np.array([[r["x"], r["y"]]]), np.array([r["heading"]]), length, width)[0]
        canvas.fill_box(img, corners, vehicle_color(r))
        if front_sector and r.get("lidar_front_min") is not None:
            reach = r["lidar_front_min"] * meta.get("lidar_range", 50.0)
            half = math.radians(meta.get("front_half_angle", 25.0))
            for side in (-half, half):
                a = r["heading"] + side
                canvas.line(img, (r["x"], r["y"]), (r["x"] + reach * math.cos(a), r["y"] + reach * math.sin(a)),
                            PALETTE["front_sector"])
    return img


def render_frames(log: TrajectoryLog, out_dir, scale: float = 4.0, front_sector: bool = False) -> list[Path]:
    """Write ``frame_<step>.ppm`` for every logged step; returns the paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create frame directory {out}: {exc}") from exc
    steps = log.steps
    if not steps:
        return []
    meta = log.meta
    geometry = MapGeometry(meta["arm_length"], meta["lane_width"], meta["lanes_per_arm"])
    canvas = Canvas(geometry, scale)
    by_step: dict[int, list[dict]] = {}
    for r in steps:
        by_step.setdefault(r["step"], []).append(r)
    paths = []
    for t in sorted(by_step):
        img = render_frame(canvas, by_step[t], meta, front_sector)
        paths.append(write_ppm(out / f"frame_{t:05d}.ppm", img))
    return paths
