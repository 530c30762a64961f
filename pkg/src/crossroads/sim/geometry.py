"""Planar geometry for the four-arm intersection.

Coordinates are metres in a right-handed frame (x east, y north); headings
are radians measured counterclockwise from +x. Traffic keeps right.

Arm ``a`` is the road whose inbound traffic heads ``a * 90`` degrees, so arm 0
lies west of the junction, arm 1 south, arm 2 east and arm 3 north. Lane 0 is
the lane next to the centre line.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

MIN_TURN_RADIUS = 4.0
ROUTE_RESOLUTION = 0.5


def heading_vector(theta: float) -> np.ndarray:
    return np.array([np.cos(theta), np.sin(theta)])


def left_normal(theta: float) -> np.ndarray:
    return np.array([-np.sin(theta), np.cos(theta)])


def wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


@dataclass(frozen=True)
class RouteSpec:
    entry_arm: int
    entry_lane: int
    exit_arm: int
    exit_lane: int

    @property
    def turn(self) -> str:
        change = (self.exit_arm + 2 - self.entry_arm) % 4
        return {0: "straight", 1: "left", 3: "right"}[change]


class Route:
    """Densely sampled centre-line polyline with arc-length parametrisation."""

    def __init__(self, spec: RouteSpec, points: np.ndarray):
        self.spec = spec
        self.points = np.asarray(points, dtype=float)
        seg = np.diff(self.points, axis=0)
        self.seg_len = np.hypot(seg[:, 0], seg[:, 1])
        self.seg_dir = seg / self.seg_len[:, None]
        self.seg_angle = np.arctan2(seg[:, 1], seg[:, 0])
        self.s = np.concatenate([[0.0], np.cumsum(self.seg_len)])
        self.length = float(self.s[-1])

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def point_at(self, s: float) -> np.ndarray:
        s = min(max(s, 0.0), self.length)
        i = min(int(np.searchsorted(self.s, s, side="right")) - 1, len(self.seg_len) - 1)
        return self.points[i] + self.seg_dir[i] * (s - self.s[i])

    def tangent_at(self, s: float) -> float:
        s = min(max(s, 0.0), self.length)
        i = min(int(np.searchsorted(self.s, s, side="right")) - 1, len(self.seg_len) - 1)
        return float(self.seg_angle[i])

    def project(self, pos, s_hint: float, back: float = 5.0, ahead: float = 15.0):
        """Closest point on the route near ``s_hint``.

        Returns ``(s, signed_lateral_offset, tangent_angle)``; the offset is
        positive to the left of the direction of travel. The search window keeps
        projections from jumping between crossing branches of the route.
        """
        lo = max(int(np.searchsorted(self.s, s_hint - back)) - 1, 0)
        hi = min(int(np.searchsorted(self.s, s_hint + ahead)) + 1, len(self.seg_len))
        p0 = self.points[lo:hi]
        d = self.seg_dir[lo:hi]
        ln = self.seg_len[lo:hi]
        rel = np.asarray(pos, dtype=float) - p0
        t = np.clip(np.einsum("ij,ij->i", rel, d), 0.0, ln)
        foot = p0 + d * t[:, None]
        gap = np.asarray(pos, dtype=float) - foot
        dist2 = np.einsum("ij,ij->i", gap, gap)
        k = int(np.argmin(dist2))
        lateral = d[k, 0] * gap[k, 1] - d[k, 1] * gap[k, 0]
        return float(self.s[lo + k] + t[k]), float(lateral), float(self.seg_angle[lo + k])


@dataclass(frozen=True)
class MapGeometry:
    arm_length: float = 60.0
    lane_width: float = 3.5
    lanes_per_arm: int = 2

    def __post_init__(self):
        if self.lanes_per_arm < 1:
            raise ValueError("lanes_per_arm must be >= 1")
        if self.lane_width <= 0 or self.arm_length <= 0:
            raise ValueError("lane_width and arm_length must be positive")

    @property
    def half_width(self) -> float:
        return self.lanes_per_arm * self.lane_width

    @property
    def conflict_zone_side(self) -> float:
        return 2.0 * self.half_width

    @property
    def extent(self) -> float:
        return self.half_width + self.arm_length

    def in_conflict_zone(self, position) -> bool:
        x, y = position[0], position[1]
        h = self.half_width
        return bool(abs(x) <= h and abs(y) <= h)

    def on_road(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        ax, ay = np.abs(p[:, 0]), np.abs(p[:, 1])
        h, e = self.half_width, self.extent
        return ((ay <= h) & (ax <= e)) | ((ax <= h) & (ay <= e))

    @cached_property
    def boundary_segments(self) -> np.ndarray:
        """Kerb segments as an (8, 2, 2) array; arm ends are left open."""
        h, e = self.half_width, self.extent
        segs = []
        for sx in (-1.0, 1.0):
            for sy in (-1.0, 1.0):
                segs.append([[sx * h, sy * e], [sx * h, sy * h]])
                segs.append([[sx * h, sy * h], [sx * e, sy * h]])
        return np.array(segs)

    def lane_offset(self, lane: int) -> float:
        return (lane + 0.5) * self.lane_width

    def entry_pose(self, arm: int, lane: int, depth: float):
        """Pose of an inbound vehicle ``depth`` metres before the conflict zone."""
        theta = arm * np.pi / 2
        pos = -(self.half_width + depth) * heading_vector(theta) - self.lane_offset(lane) * left_normal(theta)
        return pos, float(wrap_angle(theta))

    def exit_point(self, arm: int, lane: int, depth: float) -> np.ndarray:
        phi = (arm + 2) * np.pi / 2
        return (self.half_width + depth) * heading_vector(phi) - self.lane_offset(lane) * left_normal(phi)

    @cached_property
    def route_specs(self) -> tuple[RouteSpec, ...]:
        return tuple(
            RouteSpec(a, k, b, k)
            for a in range(4)
            for k in range(self.lanes_per_arm)
            for b in range(4)
            if b != a
        )

    def legal_exits(self, arm: int, lane: int) -> list[RouteSpec]:
        return [r for r in self.route_specs if r.entry_arm == arm and r.entry_lane == lane]

    def build_route(self, spec: RouteSpec) -> Route:
        if spec.exit_arm == spec.entry_arm:
            raise ValueError("U-turn routes are not supported")
        theta = spec.entry_arm * np.pi / 2
        phi = (spec.exit_arm + 2) * np.pi / 2
        u_in, u_out = heading_vector(theta), heading_vector(phi)
        far_in, _ = self.entry_pose(spec.entry_arm, spec.entry_lane, self.arm_length)
        edge_in, _ = self.entry_pose(spec.entry_arm, spec.entry_lane, 0.0)
        edge_out = self.exit_point(spec.exit_arm, spec.exit_lane, 0.0)
        far_out = self.exit_point(spec.exit_arm, spec.exit_lane, self.arm_length)

        if spec.turn == "straight":
            mid = [edge_in, edge_out]
        else:
            # corner where the two lane centre lines cross
            A = np.column_stack([u_in, -u_out])
            t = np.linalg.solve(A, edge_out - edge_in)[0]
            corner = edge_in + t * u_in
            radius = max(float(np.linalg.norm(corner - edge_in)), MIN_TURN_RADIUS)
            start = corner - radius * u_in
            sign = 1.0 if spec.turn == "left" else -1.0
            centre = start + sign * radius * left_normal(theta)
            a0 = np.arctan2(*(start - centre)[::-1])
            n = max(int(np.ceil(radius * np.pi / 2 / ROUTE_RESOLUTION)), 4)
            angles = a0 + sign * np.linspace(0.0, np.pi / 2, n + 1)
            mid = list(centre + radius * np.column_stack([np.cos(angles), np.sin(angles)]))

        pts = [far_in, *mid, far_out]
        dense = [pts[0]]
        for a, b in zip(pts[:-1], pts[1:]):
            seg = float(np.linalg.norm(b - a))
            if seg < 1e-9:
                continue
            n = max(int(np.ceil(seg / ROUTE_RESOLUTION)), 1)
            for j in range(1, n + 1):
                dense.append(a + (b - a) * j / n)
        return Route(spec, np.array(dense))


def box_corners(centers, headings, length: float, width: float) -> np.ndarray:
    """Corners of oriented rectangles, shape (n, 4, 2), counterclockwise."""
    c = np.atleast_2d(np.asarray(centers, dtype=float))
    h = np.atleast_1d(np.asarray(headings, dtype=float))
    local = np.array([[1, 1], [-1, 1], [-1, -1], [1, -1]], dtype=float) * [length / 2, width / 2]
    cos, sin = np.cos(h), np.sin(h)
    rot = np.stack([np.stack([cos, -sin], -1), np.stack([sin, cos], -1)], -2)
    return c[:, None, :] + np.einsum("nij,kj->nki", rot, local)


def boxes_overlap(corners_a: np.ndarray, corners_b: np.ndarray) -> np.ndarray:
    """Separating-axis test for batches of convex quads; touching counts as overlap."""
    a = np.asarray(corners_a, dtype=float).reshape(-1, 4, 2)
    b = np.asarray(corners_b, dtype=float).reshape(-1, 4, 2)
    axes = np.concatenate([a[:, 1:3] - a[:, 0:2], b[:, 1:3] - b[:, 0:2]], axis=1)
    pa = np.einsum("nkj,naj->nak", a, axes)
    pb = np.einsum("nkj,naj->nak", b, axes)
    separated = (pa.max(-1) < pb.min(-1)) | (pb.max(-1) < pa.min(-1))
    return ~separated.any(-1)


def box_edges(corners: np.ndarray) -> np.ndarray:
    """Edges of quads as segments, shape (n * 4, 2, 2)."""
    c = np.asarray(corners, dtype=float).reshape(-1, 4, 2)
    return np.stack([c, np.roll(c, -1, axis=1)], axis=2).reshape(-1, 2, 2)


def ray_segment_distances(origin, directions: np.ndarray, segments: np.ndarray) -> np.ndarray:
    """Distance along each unit ray to its nearest segment hit (inf if none)."""
    if len(segments) == 0:
        return np.full(len(directions), np.inf)
    o = np.asarray(origin, dtype=float)
    p = segments[:, 0, :]
    e = segments[:, 1, :] - p
    d = directions
    denom = d[:, None, 0] * e[None, :, 1] - d[:, None, 1] * e[None, :, 0]
    w = p - o
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (w[None, :, 0] * e[None, :, 1] - w[None, :, 1] * e[None, :, 0]) / denom
        u = (w[None, :, 0] * d[:, None, 1] - w[None, :, 1] * d[:, None, 0]) / denom
    hit = (np.abs(denom) > 1e-12) & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
    return np.where(hit, t, np.inf).min(axis=1)
