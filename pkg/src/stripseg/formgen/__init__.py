"""Deterministic synthetic form pages with hierarchical ground truth."""

from .dataset import (
    SPLITS,
    Sample,
    emit_dataset,
    load_dataset,
    make_pages,
    profile_params,
    read_pgm,
    sample_seed,
    split_assignment,
    to_uint8,
    write_pgm,
)
from .render import footprint, rasterize, render, render_and_rasterize
from .scene import LEVEL_OF, DocumentScene, GenParams, SceneObject, crosses, generate_scene, validate_scene

__all__ = [
    "LEVEL_OF",
    "SPLITS",
    "DocumentScene",
    "GenParams",
    "Sample",
    "SceneObject",
    "crosses",
    "emit_dataset",
    "footprint",
    "generate_scene",
    "load_dataset",
    "make_pages",
    "profile_params",
    "rasterize",
    "read_pgm",
    "render",
    "render_and_rasterize",
    "sample_seed",
    "split_assignment",
    "to_uint8",
    "validate_scene",
    "write_pgm",
]
