"""Table row/column decomposition: post-processing and scoring."""

from __future__ import annotations

from typing import Dict, List, Sequence, Tuple

import numpy as np

from .instances import ObjectInstance, extract_instances
from .metrics import match_instances


def _extend(region: np.ndarray, comps: List[ObjectInstance], axis: int, area_min: float, name: str,
            level: int) -> List[ObjectInstance]:
    out = []
    for comp in comps:
        if comp.area < area_min:
            continue
        x0, y0, x1, y1 = comp.bbox
        band = np.zeros_like(region)
        if axis == 0:  # rows: keep the row span, take the region's full width
            band[y0:y1] = True
        else:
            band[:, x0:x1] = True
        band &= region
        if band.any():
            out.append(ObjectInstance.from_mask(band, name, level))
    return out


def table_decompose_postprocess(row_mask: np.ndarray, col_mask: np.ndarray,
                                table_regions: Sequence[ObjectInstance], area_frac: float = 0.02,
                                row_id: int = 2, col_id: int = 2) -> Tuple[List[ObjectInstance], List[ObjectInstance]]:
    """Per table region: drop small row/column blobs, stretch survivors across the region.

    Row blobs with area below ``area_frac`` x region area are removed; the rest
    are extended to the region's full width (columns: full height).
    ``row_mask``/``col_mask`` are class maps (or booleans, with ids 1).
    """
    row_mask, col_mask = np.asarray(row_mask), np.asarray(col_mask)
    if row_mask.dtype == bool:
        row_id = 1
    if col_mask.dtype == bool:
        col_id = 1
    rows: List[ObjectInstance] = []
    cols: List[ObjectInstance] = []
    for region in table_regions:
        full = region.full_mask(row_mask.shape)
        area = full.sum()
        if area == 0:
            continue
        r = extract_instances(np.where(full, row_mask, 0), row_id, use_hull=False, name="table_row", level=1)
        c = extract_instances(np.where(full, col_mask, 0), col_id, use_hull=False, name="table_column", level=2)
        rows += _extend(full, r, 0, area_frac * area, "table_row", 1)
        cols += _extend(full, c, 1, area_frac * area, "table_column", 2)
    return rows, cols


def decomposition_score(pred_rows: Sequence[ObjectInstance], pred_cols: Sequence[ObjectInstance],
                        gt_rows: Sequence[ObjectInstance], gt_cols: Sequence[ObjectInstance],
                        threshold: float = 0.5) -> Dict:
    """Mean of the row and column (P, R, F1) triples."""
    r = match_instances(_as(pred_rows, "table_row"), _as(gt_rows, "table_row"), threshold)
    c = match_instances(_as(pred_cols, "table_column"), _as(gt_cols, "table_column"), threshold)
    return {
        "precision": (r.precision + c.precision) / 2,
        "recall": (r.recall + c.recall) / 2,
        "f1": (r.f1 + c.f1) / 2,
        "rows": {"precision": r.precision, "recall": r.recall, "f1": r.f1, "flags": r.flags},
        "columns": {"precision": c.precision, "recall": c.recall, "f1": c.f1, "flags": c.flags},
    }


def _as(instances, name):
    # match on geometry only: normalise class/level labels
    return [ObjectInstance(name, 0, i.mask, i.bbox, i.hull) for i in instances]
