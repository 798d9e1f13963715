"""Fit arbitrary page images onto the fixed-size canvas."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import ndimage

from .geometry import StripConfig


@dataclass(frozen=True)
class ScaleRecord:
    orig_h: int
    orig_w: int
    scale: float
    resized_h: int
    pad_rows: int
    crop_rows: int


@dataclass
class PageCanvas:
    pixels: np.ndarray  # (h, w) float32 grayscale in [0, 1]
    record: ScaleRecord

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pixels.shape

    def box_to_original(self, box):
        """Map (x0, y0, x1, y1) canvas coordinates back to the source image."""
        s = self.record.scale
        return tuple(v / s for v in box)

    def box_to_canvas(self, box):
        s = self.record.scale
        return tuple(v * s for v in box)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-centre bilinear resize with edge clamping."""
    in_h, in_w = img.shape
    ys = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    coords = np.meshgrid(np.clip(ys, 0, in_h - 1), np.clip(xs, 0, in_w - 1), indexing="ij")
    return ndimage.map_coordinates(img.astype(np.float64), coords, order=1, mode="nearest")


def preprocess(image: np.ndarray, cfg: StripConfig) -> PageCanvas:
    """Scale to canvas width (keeping aspect), then bottom-crop or zero-pad to canvas height."""
    image = np.asarray(image)
    if image.ndim != 2 or min(image.shape) < 1:
        raise ValueError(f"expected a non-empty 2D grayscale image, got shape {image.shape}")
    if image.dtype == np.uint8:
        image = image.astype(np.float32) / 255.0
    ih, iw = image.shape
    scale = cfg.w / iw
    rh = max(1, int(round(ih * scale)))
    if (rh, cfg.w) == (ih, iw):
        resized = image.astype(np.float32)
    else:
        resized = resize_bilinear(image, rh, cfg.w).astype(np.float32)
    canvas = np.zeros((cfg.h, cfg.w), dtype=np.float32)
    keep = min(rh, cfg.h)
    canvas[:keep] = resized[:keep]
    record = ScaleRecord(ih, iw, scale, rh, max(0, cfg.h - rh), max(0, rh - cfg.h))
    return PageCanvas(np.clip(canvas, 0.0, 1.0), record)


def resize_nearest(labels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    in_h, in_w = labels.shape[-2:]
    yi = np.minimum(((np.arange(out_h) + 0.5) * in_h / out_h).astype(int), in_h - 1)
    xi = np.minimum(((np.arange(out_w) + 0.5) * in_w / out_w).astype(int), in_w - 1)
    return labels[..., yi[:, None], xi[None, :]]
