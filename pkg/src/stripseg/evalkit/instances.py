"""Instance extraction from class maps and pixel IoU."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage

from .hull import fill_hull, pixel_hull

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass
class ObjectInstance:
    """A pixel set stored as a bbox-cropped boolean mask."""

    cls: str
    level: int
    mask: np.ndarray  # cropped to bbox
    bbox: Tuple[int, int, int, int]  # x0, y0, x1, y1 (half-open)
    hull: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def area(self) -> int:
        return int(self.mask.sum())

    @classmethod
    def from_mask(cls, full: np.ndarray, name: str = "", level: int = 0, hull=None) -> "ObjectInstance":
        rows = np.flatnonzero(full.any(axis=1))
        cols = np.flatnonzero(full.any(axis=0))
        if len(rows) == 0:
            raise ValueError("instance mask is empty")
        y0, y1, x0, x1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
        return cls(name, level, full[y0:y1, x0:x1].copy(), (int(x0), int(y0), int(x1), int(y1)), hull)

    def full_mask(self, shape) -> np.ndarray:
        out = np.zeros(shape, dtype=bool)
        x0, y0, x1, y1 = self.bbox
        out[y0:y1, x0:x1] = self.mask
        return out


def extract_instances(mask: np.ndarray, class_id: int, use_hull: bool = True, name: str = "",
                      level: int = 0) -> List[ObjectInstance]:
    """4-connected components of ``class_id``; optionally replaced by filled hulls.

    Components are listed in label order (top-to-bottom, left-to-right scan).
    """
    labels, n = ndimage.label(mask == class_id, structure=FOUR_CONNECTED)
    out = []
    for i, sl in enumerate(ndimage.find_objects(labels), start=1):
        comp = labels[sl] == i
        y0, x0 = sl[0].start, sl[1].start
        if use_hull:
            hull = pixel_hull(comp)
            filled = fill_hull(hull, comp.shape)
            hull = hull + np.array([x0, y0])
            inst = ObjectInstance(name, level, filled, (x0, y0, x0 + comp.shape[1], y0 + comp.shape[0]), hull)
        else:
            inst = ObjectInstance(name, level, comp, (x0, y0, x0 + comp.shape[1], y0 + comp.shape[0]))
        out.append(inst)
    return out


def _overlap(a: ObjectInstance, b: ObjectInstance) -> int:
    ax0, ay0, ax1, ay1 = a.bbox
    bx0, by0, bx1, by1 = b.bbox
    x0, y0, x1, y1 = max(ax0, bx0), max(ay0, by0), min(ax1, bx1), min(ay1, by1)
    if x0 >= x1 or y0 >= y1:
        return 0
    pa = a.mask[y0 - ay0 : y1 - ay0, x0 - ax0 : x1 - ax0]
    pb = b.mask[y0 - by0 : y1 - by0, x0 - bx0 : x1 - bx0]
    return int(np.count_nonzero(pa & pb))


def instance_iou(a, b) -> float:
    """|A & B| / |A | B| for instances or same-shape boolean masks (1 if both empty)."""
    if isinstance(a, ObjectInstance):
        inter = _overlap(a, b)
        union = a.area + b.area - inter
    else:
        a, b = np.asarray(a, bool), np.asarray(b, bool)
        if a.shape != b.shape:
            raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
        inter = int(np.count_nonzero(a & b))
        union = int(np.count_nonzero(a | b))
    return inter / union if union else 1.0
