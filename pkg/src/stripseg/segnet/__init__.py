"""Hierarchical segmentation network and its ablation variants."""

from .network import (
    ENCODER_STRIDE,
    VARIANTS,
    FeaturePack,
    NetworkConfig,
    SegNet,
    build,
    hierarchical_loss,
    layer_table,
    load_model,
    loss_terms,
    save_model,
)
from .schema import DOCUMENT_SCHEMA, TL_SCHEMA, ClassSchema, get_schema, level_offsets

__all__ = [
    "DOCUMENT_SCHEMA",
    "ENCODER_STRIDE",
    "TL_SCHEMA",
    "VARIANTS",
    "ClassSchema",
    "FeaturePack",
    "NetworkConfig",
    "SegNet",
    "build",
    "get_schema",
    "hierarchical_loss",
    "layer_table",
    "level_offsets",
    "load_model",
    "loss_terms",
    "save_model",
]
