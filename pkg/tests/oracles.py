"""Independent reference computations used by the tests.

None of these call the code under test; they are deliberately slow and
literal.
"""
from __future__ import annotations

import math

import numpy as np


# -- collision: point sampling --------------------------------------------------

def _lattice_hits(center_a, heading_a, half_a, center_b, heading_b, half_b, res):
    """Does any lattice point (spacing ``res``, in A's frame) lie inside both boxes?

    The lattice is ``res * (i + 1/2)`` along each axis of A. Only the part of
    A that can meet B's bounding box is sampled.
    """
    ca, sa = math.cos(heading_a), math.sin(heading_a)
    # B's corners in A's frame
    cb, sb = math.cos(heading_b), math.sin(heading_b)
    corners = []
    for dx, dy in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
        wx = center_b[0] + dx * half_b[0] * cb - dy * half_b[1] * sb - center_a[0]
        wy = center_b[1] + dx * half_b[0] * sb + dy * half_b[1] * cb - center_a[1]
        corners.append((ca * wx + sa * wy, -sa * wx + ca * wy))
    xs = [c[0] for c in corners]
    ys = [c[1] for c in corners]
    x_lo, x_hi = max(-half_a[0], min(xs)), min(half_a[0], max(xs))
    y_lo, y_hi = max(-half_a[1], min(ys)), min(half_a[1], max(ys))
    if x_lo > x_hi or y_lo > y_hi:
        return False
    i0, i1 = math.floor(x_lo / res - 0.5), math.ceil(x_hi / res - 0.5)
    j0, j1 = math.floor(y_lo / res - 0.5), math.ceil(y_hi / res - 0.5)
    gx = (np.arange(i0, i1 + 1) + 0.5) * res
    gy = (np.arange(j0, j1 + 1) + 0.5) * res
    gx = gx[np.abs(gx) <= half_a[0]]
    gy = gy[np.abs(gy) <= half_a[1]]
    if gx.size == 0 or gy.size == 0:
        return False
    X, Y = np.meshgrid(gx, gy)
    # back to world, then into B's frame
    wx = center_a[0] + ca * X - sa * Y - center_b[0]
    wy = center_a[1] + sa * X + ca * Y - center_b[1]
    bx = cb * wx + sb * wy
    by = -sb * wx + cb * wy
    return bool(np.any((np.abs(bx) <= half_b[0]) & (np.abs(by) <= half_b[1])))


def raster_overlap(center_a, heading_a, center_b, heading_b, length=4.5, width=2.0, res=0.01, band=0.01):
    """Classify a pair of oriented rectangles by 1 cm point sampling.

    Returns ``"overlap"`` when some lattice point lies inside both boxes shrunk
    by ``band`` (so they certainly overlap), ``"separate"`` when no lattice
    point lies inside both boxes grown by ``band`` (so they are certainly at
    least ``band`` apart), and ``"band"`` otherwise.
    """
    half = (length / 2, width / 2)
    shrunk = (half[0] - band, half[1] - band)
    grown = (half[0] + band, half[1] + band)
    if _lattice_hits(center_a, heading_a, shrunk, center_b, heading_b, shrunk, res):
        return "overlap"
    if not _lattice_hits(center_a, heading_a, grown, center_b, heading_b, grown, res):
        return "separate"
    return "band"


# -- GAE: explicit double sum ------------------------------------------------------

def gae_double_sum(rewards, values, dones, bootstrap, gamma, lam):
    """A_t = sum_k (prod_{m=t}^{k-1} gamma*lam*(1-done_m)) * delta_k."""
    T = len(rewards)
    v_next = list(values[1:]) + [bootstrap]
    deltas = [rewards[k] + gamma * v_next[k] * (1.0 - dones[k]) - values[k] for k in range(T)]
    adv = []
    for t in range(T):
        total = 0.0
        for k in range(t, T):
            weight = 1.0
            for m in range(t, k):
                weight *= gamma * lam * (1.0 - dones[m])
            total += weight * deltas[k]
        adv.append(total)
    returns = [a + v for a, v in zip(adv, values)]
    return np.array(adv), np.array(returns)


def discounted_sum(rewards, gamma):
    return sum(r * gamma**k for k, r in enumerate(rewards))


# -- finite differences -------------------------------------------------------------

def central_difference(f, x, h=1e-4):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def max_relative_error(analytic, numeric, floor=1e-6):
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


# -- lidar: analytic ray versus axis-aligned rectangle ----------------------------------

def ray_rect_distance(origin, angle, center, half_x, half_y):
    """Slab-method distance from ``origin`` along ``angle`` to an axis-aligned box."""
    d = (math.cos(angle), math.sin(angle))
    t_lo, t_hi = -math.inf, math.inf
    for axis, half in ((0, half_x), (1, half_y)):
        lo, hi = center[axis] - half, center[axis] + half
        if abs(d[axis]) < 1e-12:
            if not lo <= origin[axis] <= hi:
                return math.inf
            continue
        t1, t2 = (lo - origin[axis]) / d[axis], (hi - origin[axis]) / d[axis]
        t_lo, t_hi = max(t_lo, min(t1, t2)), min(t_hi, max(t1, t2))
    if t_hi < max(t_lo, 0.0):
        return math.inf
    return max(t_lo, 0.0)
