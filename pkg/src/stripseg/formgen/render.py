"""Page rendering and ground-truth rasterisation."""

from __future__ import annotations

from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage

from ..evalkit.hull import box_corners, convex_hull, fill_hull
from ..segnet.schema import ClassSchema, get_schema
from .scene import DocumentScene, SceneObject

INK = (0.08, 0.35)


def footprint(scene: DocumentScene, obj: SceneObject) -> np.ndarray:
    """Filled convex hull of the object's constituent element boxes."""
    hull = convex_hull(box_corners(scene.leaf_boxes(obj)))
    return fill_hull(hull, (scene.height, scene.width))


def _ring(mask: np.ndarray, width: int) -> np.ndarray:
    if width <= 0:
        return np.zeros_like(mask)
    grown = ndimage.maximum_filter(mask, size=2 * width + 1, mode="constant", cval=False)
    return grown & ~mask


def rasterize(scene: DocumentScene, schema: ClassSchema, border_width: int) -> List[np.ndarray]:
    """One uint8 class map per schema level.

    Border rings go down first and interiors are painted over them, so a
    ring never covers any structure interior of its own level.
    """
    h, w = scene.height, scene.width
    masks = [np.zeros((h, w), dtype=np.uint8) for _ in schema.levels]
    interiors: List[List[Tuple[np.ndarray, int]]] = [[] for _ in schema.levels]
    for obj in scene.objects:
        try:
            li, cid = schema.locate(obj.cls)
        except KeyError:
            continue
        interiors[li].append((footprint(scene, obj), cid))
    for li, items in enumerate(interiors):
        for fp, _ in items:
            masks[li][_ring(fp, border_width)] = 1
        for fp, cid in items:
            masks[li][fp] = cid
    return masks


def _draw_run(img, box, rng, scale):
    x0, y0, x1, y1 = box
    x = x0
    word_lo, word_hi = max(2, int(4 * scale)), max(3, int(16 * scale))
    space = max(1, int(round(2 * scale)))
    while x < x1:
        wl = int(rng.integers(word_lo, word_hi + 1))
        xe = min(x1, x + wl)
        ink = rng.uniform(*INK)
        patch = ink + rng.uniform(-0.05, 0.05, size=(y1 - y0, xe - x)) * (y1 - y0 > 2)
        # a lighter mid line gives the bar a horizontal texture
        if y1 - y0 >= 5:
            patch[(y1 - y0) // 2] += 0.25
        img[y0:y1, x:xe] = np.clip(patch, 0, 1)
        x = xe + space
        if x1 - x < word_lo:
            break
    # last word always reaches the right edge of the run box
    img[y0:y1, max(x0, x1 - 1) : x1] = rng.uniform(*INK)


def _draw_outline(img, box, t, ink):
    x0, y0, x1, y1 = box
    img[y0 : y0 + t, x0:x1] = ink
    img[y1 - t : y1, x0:x1] = ink
    img[y0:y1, x0 : x0 + t] = ink
    img[y0:y1, x1 - t : x1] = ink


def render(scene: DocumentScene, seed: Optional[int] = None) -> np.ndarray:
    """Grayscale page in [0, 1], white paper, dark ink."""
    rng = np.random.default_rng([scene.seed if seed is None else seed, 1])
    scale = scene.params.scale
    t = max(1, int(round(scale)))
    img = np.ones((scene.height, scene.width), dtype=np.float32)
    index = scene.by_id()
    for obj in scene.objects:
        if obj.cls == "textrun":
            if obj.style == "bullet":
                x0, y0, x1, y1 = obj.bbox
                img[y0:y1, x0:x1] = rng.uniform(*INK)
            else:
                _draw_run(img, obj.bbox, rng, scale)
        elif obj.cls == "widget":
            x0, y0, x1, y1 = obj.bbox
            ink = rng.uniform(*INK)
            if obj.style == "underline":
                img[y1 - t : y1, x0:x1] = ink
                img[y1 - 3 * t : y1, x0 : x0 + t] = ink
                img[y1 - 3 * t : y1, x1 - t : x1] = ink
            else:
                _draw_outline(img, obj.bbox, t, ink)
        elif obj.cls == "table" and obj.style == "ruled":
            ink = rng.uniform(*INK)
            x0, y0, x1, y1 = obj.bbox
            _draw_outline(img, obj.bbox, t, ink)
            for c in obj.children:
                child = index[c]
                if child.cls == "table_row" and child.bbox[3] + 1 < y1:
                    img[child.bbox[3] : child.bbox[3] + t, x0:x1] = ink
                elif child.cls == "table_column" and child.bbox[2] + 1 < x1:
                    img[y0:y1, child.bbox[2] : child.bbox[2] + t] = ink
    return img


def render_and_rasterize(scene: DocumentScene, schema: Optional[ClassSchema] = None,
                         border_width: Optional[int] = None) -> Tuple[np.ndarray, List[np.ndarray]]:
    schema = schema or get_schema(scene.params.schema)
    bw = scene.params.border_width if border_width is None else border_width
    return render(scene), rasterize(scene, schema, bw)
