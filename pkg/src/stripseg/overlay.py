"""Tinted mask overlays written as PNG or PPM, with a plain-text legend."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .segnet.schema import ClassSchema

RGB = Tuple[int, int, int]

DEFAULT_PALETTE: Dict[str, RGB] = {
    "border": (128, 128, 160),
    "textrun": (0, 200, 0),
    "widget": (255, 220, 0),
    "textblock": (0, 120, 255),
    "choicegroup_title": (255, 0, 200),
    "textfield": (255, 120, 0),
    "choicefield": (0, 200, 200),
    "choicegroup": (220, 0, 0),
    "table": (0, 120, 255),
    "list": (255, 120, 0),
    "table_row": (0, 200, 0),
    "table_column": (255, 220, 0),
}


class PaletteError(ValueError):
    pass


def _to_rgb(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.dtype != np.uint8:
        image = np.round(np.clip(image, 0.0, 1.0) * 255).astype(np.uint8)
    if image.ndim == 2:
        image = np.repeat(image[..., None], 3, axis=2)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected a grayscale or RGB image, got shape {image.shape}")
    return image


def compose(image: np.ndarray, masks: Sequence[np.ndarray], class_names: Sequence[Sequence[str]],
            palette: Optional[Dict[str, RGB]] = None, alpha: float = 0.45) -> Tuple[np.ndarray, Dict[str, RGB]]:
    """Blend each non-background class of each mask over the image.

    ``masks[i]`` is a class map indexed by ``class_names[i]``; class id 0 is
    background and never tinted. Later masks are blended on top of earlier
    ones. Returns the uint8 RGB composite and the colours actually used.
    """
    palette = DEFAULT_PALETTE if palette is None else palette
    if not 0 <= alpha <= 1:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    out = _to_rgb(image).astype(np.float64)
    used: Dict[str, RGB] = {}
    for mask, names in zip(masks, class_names):
        mask = np.asarray(mask)
        if mask.shape != out.shape[:2]:
            raise ValueError(f"mask shape {mask.shape} differs from image shape {out.shape[:2]}")
        for cid in np.unique(mask):
            if cid == 0:
                continue
            if cid >= len(names):
                raise ValueError(f"mask contains class id {cid} but only {len(names)} classes are known")
            name = names[cid]
            if name not in palette:
                raise PaletteError(f"palette has no colour for class {name!r}")
            colour = np.asarray(palette[name], dtype=np.float64)
            sel = mask == cid
            out[sel] = (1 - alpha) * out[sel] + alpha * colour
            used[name] = tuple(int(c) for c in palette[name])
    return np.round(out).astype(np.uint8), used


def schema_names(schema: ClassSchema, levels: Sequence[int]) -> list:
    return [schema.levels[li] for li in levels]


def write_ppm(path, rgb: np.ndarray) -> None:
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(rgb, dtype=np.uint8).tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6" or int(parts[3]) != 255:
        raise ValueError(f"{path}: not an 8-bit binary PPM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4], dtype=np.uint8, count=w * h * 3).reshape(h, w, 3).copy()


def write_image(path, rgb: np.ndarray) -> None:
    """PPM for ``.ppm`` paths, otherwise PNG."""
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        write_ppm(path, rgb)
    else:
        import matplotlib.image as mpimg

        mpimg.imsave(path, rgb, format="png", metadata={"Software": None})


def write_legend(path, used: Dict[str, RGB], alpha: float) -> None:
    lines = [f"alpha {alpha:g}"]
    lines += [f"{name}\t#{r:02x}{g:02x}{b:02x}" for name, (r, g, b) in used.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def overlay(image: np.ndarray, masks: Sequence[np.ndarray], class_names: Sequence[Sequence[str]], out_path,
            palette: Optional[Dict[str, RGB]] = None, alpha: float = 0.45) -> Tuple[Path, Path]:
    """Write the composite and a ``<out>.legend.txt`` sidecar; returns both paths."""
    rgb, used = compose(image, masks, class_names, palette, alpha)
    out_path = Path(out_path)
    write_image(out_path, rgb)
    legend = out_path.with_name(out_path.name + ".legend.txt")
    write_legend(legend, used, alpha)
    return out_path, legend
