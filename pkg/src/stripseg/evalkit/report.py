"""Aggregate evaluation over pages and the serialisable report."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..segnet.schema import ClassSchema
from .instances import extract_instances
from .metrics import ClassScore, dataset_miou, match_instances, pixel_accuracy


@dataclass
class MetricsReport:
    schema: str
    miou: Dict[str, Dict[str, Optional[float]]]
    pixel_accuracy: Dict[str, float]
    objects: Dict[str, Dict[str, Dict]] = field(default_factory=dict)  # threshold -> class -> scores
    decomposition: Optional[Dict] = None
    meta: Dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls(**json.loads(text))

    def structure_columns(self) -> List[str]:
        cols = []
        for classes in self.miou.values():
            cols += [c for c in classes if c not in ("background", "border")]
        return cols

    def to_text(self) -> str:
        """Aligned table: one column per structure class, values in percent."""
        cols = self.structure_columns()
        lookup = {c: v for classes in self.miou.values() for c, v in classes.items()}
        rows = [("MIoU", [lookup.get(c) for c in cols])]
        for thr in sorted(self.objects, key=float):
            scores = self.objects[thr]
            for key, label in (("precision", "P"), ("recall", "R"), ("f1", "F1")):
                rows.append((f"{label}@{thr}", [scores.get(c, {}).get(key) for c in cols]))
        width = max(10, *(len(c) + 2 for c in cols))
        head_w = max(len(r[0]) for r in rows) + 2
        fmt = lambda v: "-" if v is None else f"{100 * v:.2f}"
        lines = ["metric".ljust(head_w) + "".join(c.rjust(width) for c in cols)]
        lines.append("-" * len(lines[0]))
        for name, vals in rows:
            lines.append(name.ljust(head_w) + "".join(fmt(v).rjust(width) for v in vals))
        lines.append("")
        lines.append("pixel accuracy: " + ", ".join(f"{k} {100 * v:.2f}" for k, v in self.pixel_accuracy.items()))
        if self.decomposition:
            d = self.decomposition
            lines.append(f"decomposition P/R/F1: {100 * d['precision']:.2f} / {100 * d['recall']:.2f} / {100 * d['f1']:.2f}")
        return "\n".join(lines) + "\n"


def object_scores(preds: Sequence[Sequence[np.ndarray]], gts: Sequence[Sequence[np.ndarray]],
                  schema: ClassSchema, threshold: float = 0.7, use_hull: bool = True) -> Dict[str, ClassScore]:
    """Per structure class TP/FP/FN summed over pages."""
    totals = {cls: ClassScore() for _, cls in schema.structure_classes()}
    for p, g in zip(preds, gts):
        for li, cls in schema.structure_classes():
            cid = schema.class_id(li, cls)
            pi = extract_instances(p[li], cid, use_hull, cls, li)
            gi = extract_instances(g[li], cid, use_hull, cls, li)
            res = match_instances(pi, gi, threshold)
            totals[cls] += res.per_class.get(cls, ClassScore())
    return totals


def evaluate_pages(preds: Sequence[Sequence[np.ndarray]], gts: Sequence[Sequence[np.ndarray]],
                   schema: ClassSchema, thresholds: Sequence[float] = (0.7,), use_hull: bool = True,
                   meta: Optional[Dict] = None) -> MetricsReport:
    miou = dataset_miou(preds, gts, schema)
    acc = {}
    for li, lname in enumerate(schema.level_names):
        acc[lname] = float(np.mean([pixel_accuracy(p[li], g[li]) for p, g in zip(preds, gts)])) if preds else 0.0
    objects = {}
    for thr in thresholds:
        scores = object_scores(preds, gts, schema, thr, use_hull)
        objects[f"{thr:g}"] = {c: s.to_dict() for c, s in scores.items()}
    return MetricsReport(schema.name, miou, acc, objects, None, dict(meta or {}, pages=len(preds)))
