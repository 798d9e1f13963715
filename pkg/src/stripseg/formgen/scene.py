"""Synthetic form scenes: a hierarchy of text runs, widgets and the structures built from them.

Levels (document schema):
    1  textrun, widget
    2  textblock, choicegroup_title
    3  textfield, choicefield
    4  choicegroup

A TL scene holds tables and lists (with row/column objects) among free
text blocks. Layout is a top-down flow of rows, each holding one or two
structures; every structure sits in its own box separated from the
others by at least ``min_gap`` pixels, so same-level footprints never touch.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

Box = Tuple[int, int, int, int]

LEVEL_OF = {
    "textrun": 1,
    "widget": 1,
    "textblock": 2,
    "choicegroup_title": 2,
    "textfield": 3,
    "choicefield": 3,
    "choicegroup": 4,
    # table / list scenes
    "table": 1,
    "list": 1,
    "table_row": 2,
    "table_column": 3,
}


@dataclass
class SceneObject:
    id: int
    level: int
    cls: str
    bbox: Box  # x0, y0, x1, y1, half-open, canvas pixels
    children: List[int] = field(default_factory=list)
    style: str = ""  # rendering hint (box / underline / checkbox / bullet ...)

    def to_dict(self) -> Dict:
        return {"id": self.id, "level": self.level, "class": self.cls, "bbox": list(self.bbox),
                "children": list(self.children), "style": self.style}

    @classmethod
    def from_dict(cls, d: Dict) -> "SceneObject":
        return cls(d["id"], d["level"], d["class"], tuple(d["bbox"]), list(d["children"]), d.get("style", ""))


@dataclass
class GenParams:
    """Generator knobs. Lengths are in desk pixels and multiplied by ``scale``."""

    width: int = 208
    height: int = 464
    scale: float = 1.0
    border_width: int = 2
    schema: str = "document"
    margin: int = 8
    text_height: Tuple[int, int] = (5, 7)
    run_width: Tuple[int, int] = (20, 90)
    runs_per_block: Tuple[int, int] = (1, 3)
    line_gap: Tuple[int, int] = (3, 4)
    widgets_per_field: Tuple[int, int] = (1, 2)
    choices_per_group: Tuple[int, int] = (2, 4)
    row_gap: Tuple[int, int] = (5, 12)
    min_gap: int = 3
    two_column_prob: float = 0.35
    weight_textblock: float = 1.0
    weight_textfield: float = 1.3
    weight_choicegroup: float = 0.8
    weight_table: float = 1.0
    weight_list: float = 0.8
    span_bias: float = 0.0
    span_rows: Tuple[int, ...] = (96, 192, 288)
    max_retries: int = 8

    def __post_init__(self):
        for name in ("text_height", "run_width", "runs_per_block", "line_gap", "widgets_per_field",
                     "choices_per_group", "row_gap"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name}: empty or negative range {(lo, hi)}")
            setattr(self, name, (int(lo), int(hi)))
        self.span_rows = tuple(int(v) for v in self.span_rows)
        for name in ("two_column_prob", "span_bias"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.width < 32 or self.height < 32:
            raise ValueError("canvas too small to hold a structure")
        if self.scale <= 0 or self.border_width < 0 or self.min_gap < 1:
            raise ValueError("scale must be > 0, border_width >= 0, min_gap >= 1")
        if self.schema not in ("document", "tl"):
            raise ValueError(f"schema must be 'document' or 'tl', got {self.schema!r}")

    def to_dict(self) -> Dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: Dict) -> "GenParams":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass
class DocumentScene:
    width: int
    height: int
    seed: int
    params: GenParams
    objects: List[SceneObject] = field(default_factory=list)

    def by_id(self) -> Dict[int, SceneObject]:
        return {o.id: o for o in self.objects}

    def of_class(self, cls: str) -> List[SceneObject]:
        return [o for o in self.objects if o.cls == cls]

    def leaf_boxes(self, obj: SceneObject) -> List[Box]:
        """Boxes of the childless descendants (the object itself if it has no children)."""
        index = self.by_id()
        out, stack = [], [obj]
        while stack:
            o = stack.pop()
            if o.children:
                stack.extend(index[c] for c in o.children)
            else:
                out.append(o.bbox)
        return out

    def to_records(self) -> List[Dict]:
        return [o.to_dict() for o in self.objects]

    def to_json(self) -> str:
        return json.dumps({"width": self.width, "height": self.height, "seed": self.seed,
                           "params": self.params.to_dict(), "objects": self.to_records()}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DocumentScene":
        d = json.loads(text)
        return cls(d["width"], d["height"], d["seed"], GenParams.from_dict(d["params"]),
                   [SceneObject.from_dict(o) for o in d["objects"]])


# ---------------------------------------------------------------------- builder


class _Builder:
    def __init__(self, params: GenParams, rng: np.random.Generator):
        self.p = params
        self.rng = rng
        self.objects: List[SceneObject] = []

    def px(self, v: float) -> int:
        return max(1, int(round(v * self.p.scale)))

    def rint(self, rng_pair) -> int:
        lo, hi = rng_pair
        return self.px(int(self.rng.integers(lo, hi + 1)))

    @property
    def gap(self) -> int:
        return self.px(self.p.min_gap)

    def add(self, cls: str, bbox: Box, children=(), style="") -> SceneObject:
        obj = SceneObject(len(self.objects), LEVEL_OF[cls], cls, tuple(int(v) for v in bbox), list(children), style)
        self.objects.append(obj)
        return obj

    def box_of(self, ids: Sequence[int]) -> Box:
        boxes = [self.objects[i].bbox for i in ids]
        return (min(b[0] for b in boxes), min(b[1] for b in boxes), max(b[2] for b in boxes), max(b[3] for b in boxes))

    # ---- elements
    def run(self, x: int, y: int, max_w: int, th: Optional[int] = None) -> Optional[SceneObject]:
        lo = self.px(self.p.run_width[0])
        if max_w < lo:
            return None
        w = int(self.rng.integers(lo, max(lo, min(self.px(self.p.run_width[1]), max_w)) + 1))
        th = th or self.rint(self.p.text_height)
        return self.add("textrun", (x, y, x + w, y + th))

    def block(self, x: int, y: int, max_w: int, cls: str = "textblock", n_runs: Optional[int] = None):
        n = n_runs or int(self.rng.integers(self.p.runs_per_block[0], self.p.runs_per_block[1] + 1))
        th = self.rint(self.p.text_height)
        ids, yy = [], y
        for _ in range(max(1, n)):
            r = self.run(x, yy, max_w, th)
            if r is None:
                break
            ids.append(r.id)
            yy = r.bbox[3] + max(self.gap, self.rint(self.p.line_gap))
        if not ids:
            return None
        return self.add(cls, self.box_of(ids), ids)

    # ---- structures; each returns the top-level object or None if it does not fit
    def textblock(self, x, y, max_w):
        return self.block(x, y, max_w)

    def textfield(self, x, y, max_w):
        cap_max = min(max_w, self.px(70))
        cap = self.block(x, y, cap_max, n_runs=1)
        if cap is None:
            return None
        th = cap.bbox[3] - cap.bbox[1]
        n_w = int(self.rng.integers(self.p.widgets_per_field[0], self.p.widgets_per_field[1] + 1))
        inline = self.rng.random() < 0.5 and max_w - (cap.bbox[2] - x) >= self.px(40)
        style = "box" if self.rng.random() < 0.5 else "underline"
        wh = th + self.px(4)
        ids = []
        if inline:
            wx = cap.bbox[2] + self.gap + self.px(2)
            wy = cap.bbox[1] - (wh - th) // 2
            wy = max(wy, y)
        else:
            wx = x
            wy = cap.bbox[3] + self.gap
        avail = x + max_w - wx
        for k in range(max(1, n_w)):
            ww = int(self.rng.integers(min(self.px(30), avail), avail + 1)) if avail > self.px(30) else avail
            if ww < self.px(12):
                break
            wdg = self.add("widget", (wx, wy, wx + ww, wy + wh), style=style)
            ids.append(wdg.id)
            wy = wdg.bbox[3] + self.gap
        if not ids:
            return None
        # a field may grow its caption box to the right of the widgets; keep all children inside
        return self.add("textfield", self.box_of(ids + [cap.id]), ids + [cap.id])

    def choicefield(self, x, y, max_w, th):
        cb = th + self.px(1)
        wdg = self.add("widget", (x, y, x + cb, y + cb), style="checkbox")
        cx = x + cb + self.gap + self.px(1)
        cap = self.run(cx, y + (cb - th) // 2, x + max_w - cx, th)
        if cap is None:
            return None
        blk = self.add("textblock", cap.bbox, [cap.id])
        return self.add("choicefield", self.box_of([wdg.id, blk.id]), [wdg.id, blk.id])

    def choicegroup(self, x, y, max_w, n_choices: Optional[int] = None):
        n_title = 1 if self.rng.random() < 0.7 else 2
        title = self.block(x, y, max_w, cls="choicegroup_title", n_runs=n_title)
        if title is None:
            return None
        n = n_choices or int(self.rng.integers(self.p.choices_per_group[0], self.p.choices_per_group[1] + 1))
        th = self.rint(self.p.text_height)
        indent = self.px(int(self.rng.integers(0, 9)))
        horizontal = self.rng.random() < 0.3 and n <= 3 and max_w >= self.px(150) and n_choices is None
        ids = [title.id]
        yy = title.bbox[3] + self.gap + self.px(2)
        xx = x + indent
        for k in range(n):
            if horizontal:
                slot = (max_w - indent) // n
                cf = self.choicefield(xx, yy, slot - self.gap, th)
                xx += slot
            else:
                cf = self.choicefield(xx, yy, max_w - indent, th)
                if cf is not None:
                    yy = cf.bbox[3] + self.gap + self.px(int(self.rng.integers(0, 3)))
            if cf is None:
                break
            ids.append(cf.id)
        if len(ids) < 2:
            return None
        return self.add("choicegroup", self.box_of(ids), ids)

    def table(self, x, y, max_w):
        n_rows = int(self.rng.integers(3, 7))
        n_cols = int(self.rng.integers(2, 5))
        th = self.rint(self.p.text_height)
        pad = self.px(3)
        row_h = th + 2 * pad
        width = int(self.rng.integers(min(max_w, self.px(120)), max_w + 1))
        col_w = width // n_cols
        if col_w < self.px(20):
            return None
        width = col_w * n_cols
        cells, rows, cols = [], [], []
        for r in range(n_rows):
            for c in range(n_cols):
                cx = x + c * col_w + pad
                run = self.run(cx, y + r * row_h + pad, col_w - 2 * pad, th)
                if run is not None:
                    cells.append(run.id)
        for r in range(n_rows):
            rows.append(self.add("table_row", (x + 1, y + r * row_h + 1, x + width - 1, y + (r + 1) * row_h - 1)).id)
        for c in range(n_cols):
            cols.append(self.add("table_column", (x + c * col_w + 1, y + 1, x + (c + 1) * col_w - 1, y + n_rows * row_h - 1)).id)
        ruled = "ruled" if self.rng.random() < 0.6 else "plain"
        return self.add("table", (x, y, x + width, y + n_rows * row_h), rows + cols + cells, style=ruled)

    def list_(self, x, y, max_w):
        n = int(self.rng.integers(3, 6))
        th = self.rint(self.p.text_height)
        ids, yy = [], y
        for _ in range(n):
            bullet = self.add("textrun", (x, yy + th // 3, x + max(2, th // 2), yy + th // 3 + max(2, th // 2)), style="bullet")
            run = self.run(x + self.px(8), yy, max_w - self.px(8), th)
            if run is None:
                break
            ids += [bullet.id, run.id]
            yy = run.bbox[3] + max(self.gap, self.rint(self.p.line_gap))
        if len(ids) < 4:
            return None
        return self.add("list", self.box_of(ids), ids)


def _kinds(params: GenParams):
    if params.schema == "tl":
        return ["textblock", "table", "list_"], [params.weight_textblock, params.weight_table, params.weight_list]
    return (["textblock", "textfield", "choicegroup"],
            [params.weight_textblock, params.weight_textfield, params.weight_choicegroup])


def generate_scene(seed: int, params: Optional[GenParams] = None) -> DocumentScene:
    """Lay out one page. Deterministic in (seed, params)."""
    p = params or GenParams()
    rng = np.random.default_rng(seed)
    b = _Builder(p, rng)
    kinds, weights = _kinds(p)
    weights = np.asarray(weights, float) / np.sum(weights)
    m = b.px(p.margin)
    bottom = p.height - m
    full_w = p.width - 2 * m
    # strip cuts this page should see a choice group straddle
    targets = sorted(r for r in p.span_rows if m + b.px(16) < r < bottom - b.px(16) and rng.random() < p.span_bias)
    if p.schema == "tl":
        targets = []
    y = m + b.px(int(rng.integers(0, 6)))
    gap_after = lambda: b.rint(p.row_gap) + b.gap
    fails = 0
    while y < bottom and fails < p.max_retries:
        while targets and y >= targets[0] - b.px(4):
            targets.pop(0)
        mark = len(b.objects)
        if targets and targets[0] - y < b.px(70):
            end = _place_straddling(b, m, full_w, y, targets.pop(0), bottom)
            if end is None:
                del b.objects[mark:]
            else:
                y = end + gap_after()
            continue
        two = rng.random() < p.two_column_prob
        col_gap = b.px(10)
        widths = [(full_w - col_gap) // 2] * 2 if two else [full_w]
        xs = [m, m + widths[0] + col_gap] if two else [m]
        tops = []
        for x, w in zip(xs, widths):
            kind = kinds[int(rng.choice(len(kinds), p=weights))]
            obj = getattr(b, kind)(x, y, w)
            if obj is not None:
                tops.append(obj)
        row_bottom = max((o.bbox[3] for o in tops), default=None)
        if row_bottom is None or row_bottom > bottom:
            del b.objects[mark:]
            fails += 1
            continue
        if targets and row_bottom + b.gap > targets[0] - b.px(4):
            # this row would end inside the cut zone: put a straddling group here instead
            del b.objects[mark:]
            end = _place_straddling(b, m, full_w, y, targets.pop(0), bottom)
            if end is None:
                del b.objects[mark:]
                fails += 1
            else:
                y = end + gap_after()
            continue
        fails = 0
        y = row_bottom + gap_after()
    return DocumentScene(p.width, p.height, seed, p, b.objects)


def _place_straddling(b: _Builder, x: int, max_w: int, y: int, cut: int, bottom: int) -> Optional[int]:
    """Place a vertical choice group whose rows run across ``cut``; returns its bottom."""
    for n in range(b.p.choices_per_group[0], b.p.choices_per_group[1] + 3):
        mark = len(b.objects)
        cg = b.choicegroup(x, y, max_w, n_choices=n)
        if cg is None:
            return None
        top, bot = cg.bbox[1], cg.bbox[3]
        if bot > bottom:
            del b.objects[mark:]
            return None
        if top < cut - b.px(4) and bot > cut + b.px(4):
            return bot
        del b.objects[mark:]
    return None


# ---------------------------------------------------------------------- validation


def _contains(outer: Box, inner: Box) -> bool:
    return outer[0] <= inner[0] and outer[1] <= inner[1] and inner[2] <= outer[2] and inner[3] <= outer[3]


def _disjoint(a: Box, b: Box) -> bool:
    return a[2] <= b[0] or b[2] <= a[0] or a[3] <= b[1] or b[3] <= a[1]


def validate_scene(scene: DocumentScene) -> List[str]:
    """Return a list of hierarchy/geometry violations (empty when valid)."""
    errors = []
    index = scene.by_id()
    if len(index) != len(scene.objects):
        errors.append("duplicate object ids")
    parent: Dict[int, int] = {}
    for o in scene.objects:
        x0, y0, x1, y1 = o.bbox
        if not (0 <= x0 < x1 <= scene.width and 0 <= y0 < y1 <= scene.height):
            errors.append(f"object {o.id} bbox {o.bbox} outside canvas or empty")
        if LEVEL_OF.get(o.cls) != o.level:
            errors.append(f"object {o.id} class {o.cls} has level {o.level}")
        for c in o.children:
            if c not in index:
                errors.append(f"object {o.id} has unknown child {c}")
                continue
            if c in parent:
                errors.append(f"object {c} has two parents")
            parent[c] = o.id
            child = index[c]
            if not _contains(o.bbox, child.bbox):
                errors.append(f"child {c} bbox {child.bbox} not inside parent {o.id} {o.bbox}")
            if scene.params.schema == "document" and child.level >= o.level:
                errors.append(f"child {c} ({child.cls}) is not below parent {o.id} ({o.cls})")
    # same-class interiors pairwise disjoint (per level for the document schema)
    groups: Dict[object, List[SceneObject]] = {}
    for o in scene.objects:
        key = o.level if scene.params.schema == "document" else o.cls
        groups.setdefault(key, []).append(o)
    for key, objs in groups.items():
        if key in ("textrun",) and scene.params.schema == "tl":
            continue
        for i in range(len(objs)):
            for j in range(i + 1, len(objs)):
                if not _disjoint(objs[i].bbox, objs[j].bbox):
                    errors.append(f"objects {objs[i].id} and {objs[j].id} overlap at level {key}")
    if scene.params.schema == "document":
        for o in scene.objects:
            if o.cls == "textrun" and o.id not in parent:
                errors.append(f"textrun {o.id} has no enclosing text block")
            if o.cls == "widget" and o.id not in parent:
                errors.append(f"widget {o.id} is not part of a field")
    return errors


def crosses(box: Box, row: int) -> bool:
    """True when rows on both sides of the cut ``row`` belong to the box."""
    return box[1] < row < box[3]
