"""Segmentation evaluation: MIoU, hull-based instances, object P/R/F1, table decomposition."""

from .hull import box_corners, convex_hull, fill_hull, inside_hull, pixel_hull, polygon_area
from .instances import FOUR_CONNECTED, ObjectInstance, extract_instances, instance_iou
from .metrics import ClassScore, MatchResult, class_iou, dataset_miou, f1_score, match_instances, pixel_accuracy
from .report import MetricsReport, evaluate_pages, object_scores
from .tables import decomposition_score, table_decompose_postprocess

__all__ = [
    "FOUR_CONNECTED",
    "ClassScore",
    "MatchResult",
    "MetricsReport",
    "ObjectInstance",
    "box_corners",
    "class_iou",
    "convex_hull",
    "dataset_miou",
    "decomposition_score",
    "evaluate_pages",
    "extract_instances",
    "f1_score",
    "fill_hull",
    "inside_hull",
    "instance_iou",
    "match_instances",
    "object_scores",
    "pixel_accuracy",
    "pixel_hull",
    "polygon_area",
    "table_decompose_postprocess",
]
