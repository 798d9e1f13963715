"""Pixel and object-level scores."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..segnet.schema import ClassSchema
from .instances import ObjectInstance, instance_iou


def class_iou(pred: np.ndarray, gt: np.ndarray, class_id: int) -> Optional[float]:
    """IoU of one class on one image; None when neither map contains it."""
    a, b = pred == class_id, gt == class_id
    union = np.count_nonzero(a | b)
    if union == 0:
        return None
    return np.count_nonzero(a & b) / union


def dataset_miou(preds: Sequence[Sequence[np.ndarray]], gts: Sequence[Sequence[np.ndarray]],
                 schema: ClassSchema) -> Dict[str, Dict[str, Optional[float]]]:
    """Per level, per class mean over images of per-image IoU.

    Images where the class is absent from both maps are skipped; a class
    absent everywhere is reported as None rather than 0.
    """
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions vs {len(gts)} ground truths")
    out: Dict[str, Dict[str, Optional[float]]] = {}
    for li, (lname, classes) in enumerate(zip(schema.level_names, schema.levels)):
        out[lname] = {}
        for ci, cname in enumerate(classes):
            vals = []
            for p, g in zip(preds, gts):
                if p[li].shape != g[li].shape:
                    raise ValueError(f"level {lname}: shapes {p[li].shape} vs {g[li].shape}")
                v = class_iou(p[li], g[li], ci)
                if v is not None:
                    vals.append(v)
            out[lname][cname] = float(np.mean(vals)) if vals else None
    return out


def pixel_accuracy(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shapes differ: {pred.shape} vs {gt.shape}")
    return float(np.mean(pred == gt)) if pred.size else 1.0


def f1_score(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass
class ClassScore:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        return f1_score(self.precision, self.recall)

    @property
    def flags(self) -> List[str]:
        out = []
        if self.tp + self.fp == 0:
            out.append("no_predictions")
        if self.tp + self.fn == 0:
            out.append("no_ground_truth")
        return out

    def __iadd__(self, other: "ClassScore") -> "ClassScore":
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        return self

    def to_dict(self) -> Dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "precision": self.precision,
                "recall": self.recall, "f1": self.f1, "flags": self.flags}


@dataclass
class MatchResult:
    pairs: List[Tuple[int, int, float]]  # (pred index, gt index, iou)
    unmatched_preds: List[int]
    unmatched_gts: List[int]
    per_class: Dict[str, ClassScore] = field(default_factory=dict)

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def total(self) -> ClassScore:
        return ClassScore(self.tp, len(self.unmatched_preds), len(self.unmatched_gts))

    @property
    def precision(self) -> float:
        return self.total.precision

    @property
    def recall(self) -> float:
        return self.total.recall

    @property
    def f1(self) -> float:
        return self.total.f1

    @property
    def flags(self) -> List[str]:
        return self.total.flags


def match_instances(preds: Sequence[ObjectInstance], gts: Sequence[ObjectInstance],
                    threshold: float = 0.7) -> MatchResult:
    """Greedy one-to-one matching of same-class instances by descending IoU.

    Only pairs with IoU >= threshold are candidates; ties are broken by
    (pred index, gt index) so the result is deterministic.
    """
    cands = []
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            if p.cls != g.cls or p.level != g.level:
                continue
            v = instance_iou(p, g)
            if v >= threshold and v > 0:
                cands.append((-v, i, j))
    cands.sort()
    used_p, used_g, pairs = set(), set(), []
    for negv, i, j in cands:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        pairs.append((i, j, -negv))
    res = MatchResult(pairs, [i for i in range(len(preds)) if i not in used_p],
                      [j for j in range(len(gts)) if j not in used_g])
    for inst in list(preds) + list(gts):
        res.per_class.setdefault(inst.cls, ClassScore())
    for i, j, _ in pairs:
        res.per_class[preds[i].cls].tp += 1
    for i in res.unmatched_preds:
        res.per_class[preds[i].cls].fp += 1
    for j in res.unmatched_gts:
        res.per_class[gts[j].cls].fn += 1
    return res
