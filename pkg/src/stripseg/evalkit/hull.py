"""Convex hulls of point sets and their pixel rasterisation.

Coordinates are (x, y) in continuous pixel space: pixel (row r, col c)
covers [c, c+1) x [r, r+1) and has its centre at (c + 0.5, r + 0.5).
"""

from __future__ import annotations

from typing import Iterable, Sequence, Tuple

import numpy as np


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> np.ndarray:
    """Monotone-chain (Graham-style) hull: CCW vertices, no collinear vertices.

    Returns a (k, 2) float array; k = 1 for a single point, 2 for a segment.
    Counter-clockwise is taken in a y-up frame (the usual math orientation).
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("convex_hull needs at least one point")
    uniq = sorted(set(map(tuple, pts.tolist())))
    if len(uniq) <= 2:
        return np.array(uniq, dtype=np.float64)
    lower: list = []
    for p in uniq:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(uniq):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    return np.array(hull, dtype=np.float64)


def polygon_area(poly: np.ndarray) -> float:
    """Shoelace area (0 for points and segments)."""
    poly = np.asarray(poly, dtype=np.float64)
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def box_corners(boxes: Iterable[Sequence[float]]) -> np.ndarray:
    """Corner points of half-open (x0, y0, x1, y1) boxes."""
    out = []
    for x0, y0, x1, y1 in boxes:
        out.extend([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
    return np.array(out, dtype=np.float64).reshape(-1, 2)


def inside_hull(hull: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Boundary-inclusive point-in-convex-polygon test (vectorised)."""
    hull = np.asarray(hull, dtype=np.float64)
    if len(hull) == 1:
        return (xs == hull[0, 0]) & (ys == hull[0, 1])
    if len(hull) == 2:
        (ax, ay), (bx, by) = hull
        cross = (bx - ax) * (ys - ay) - (by - ay) * (xs - ax)
        dot = (xs - ax) * (bx - ax) + (ys - ay) * (by - ay)
        return (cross == 0) & (dot >= 0) & (dot <= (bx - ax) ** 2 + (by - ay) ** 2)
    ok = np.ones(np.broadcast(xs, ys).shape, dtype=bool)
    for i in range(len(hull)):
        ax, ay = hull[i]
        bx, by = hull[(i + 1) % len(hull)]
        ok &= (bx - ax) * (ys - ay) - (by - ay) * (xs - ax) >= 0
    return ok


def fill_hull(hull: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """Boolean mask of pixels whose centre lies in (or on) the hull."""
    h, w = shape
    mask = np.zeros((h, w), dtype=bool)
    hull = np.asarray(hull, dtype=np.float64)
    r0 = max(0, int(np.floor(hull[:, 1].min() - 0.5)))
    r1 = min(h, int(np.ceil(hull[:, 1].max())) + 1)
    c0 = max(0, int(np.floor(hull[:, 0].min() - 0.5)))
    c1 = min(w, int(np.ceil(hull[:, 0].max())) + 1)
    if r0 >= r1 or c0 >= c1:
        return mask
    ys = np.arange(r0, r1)[:, None] + 0.5
    xs = np.arange(c0, c1)[None, :] + 0.5
    mask[r0:r1, c0:c1] = inside_hull(hull, xs, ys)
    return mask


def pixel_hull(mask: np.ndarray) -> np.ndarray:
    """Hull of the centres of the set pixels of ``mask``."""
    rows, cols = np.nonzero(mask)
    if len(rows) == 0:
        raise ValueError("pixel_hull of an empty mask")
    pts = np.stack([cols + 0.5, rows + 0.5], axis=1)
    # only the extreme pixels of each row can be hull vertices
    order = np.lexsort((pts[:, 0], pts[:, 1]))
    pts = pts[order]
    first = np.r_[True, pts[1:, 1] != pts[:-1, 1]]
    last = np.r_[pts[1:, 1] != pts[:-1, 1], True]
    return convex_hull(pts[first | last])
