"""Hierarchy class schemas: one ordered class list per segmentation head."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple


@dataclass(frozen=True)
class ClassSchema:
    name: str
    level_names: Tuple[str, ...]
    levels: Tuple[Tuple[str, ...], ...]

    def __post_init__(self):
        if len(self.level_names) != len(self.levels):
            raise ValueError("level_names and levels differ in length")
        for lname, classes in zip(self.level_names, self.levels):
            if len(classes) < 2 or classes[0] != "background" or classes[1] != "border":
                raise ValueError(f"level {lname} must start with background, border; got {classes}")
            if len(set(classes)) != len(classes):
                raise ValueError(f"duplicate class in level {lname}")

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def class_counts(self) -> Tuple[int, ...]:
        return tuple(len(c) for c in self.levels)

    @property
    def prior_channels(self) -> int:
        return sum(self.class_counts)

    def class_id(self, level: int, cls: str) -> int:
        return self.levels[level].index(cls)

    def locate(self, cls: str) -> Tuple[int, int]:
        """(level index, class id) of a structure class."""
        for li, classes in enumerate(self.levels):
            if cls in classes[2:]:
                return li, classes.index(cls)
        raise KeyError(cls)

    def structure_classes(self) -> List[Tuple[int, str]]:
        return [(li, c) for li, classes in enumerate(self.levels) for c in classes[2:]]

    def to_dict(self) -> Dict:
        return {"name": self.name, "level_names": list(self.level_names), "levels": [list(c) for c in self.levels]}

    @classmethod
    def from_dict(cls, d: Dict) -> "ClassSchema":
        return cls(d["name"], tuple(d["level_names"]), tuple(tuple(c) for c in d["levels"]))


DOCUMENT_SCHEMA = ClassSchema(
    "document",
    ("L1", "L2", "L3", "L4"),
    (
        ("background", "border", "textrun", "widget"),
        ("background", "border", "textblock", "choicegroup_title"),
        ("background", "border", "textfield", "choicefield"),
        ("background", "border", "choicegroup"),
    ),
)

TL_SCHEMA = ClassSchema(
    "tl",
    ("detect", "rows", "columns"),
    (
        ("background", "border", "table", "list"),
        ("background", "border", "table_row"),
        ("background", "border", "table_column"),
    ),
)

SCHEMAS = {s.name: s for s in (DOCUMENT_SCHEMA, TL_SCHEMA)}


def get_schema(name: str) -> ClassSchema:
    try:
        return SCHEMAS[name]
    except KeyError:
        raise ValueError(f"unknown schema {name!r}; choose from {sorted(SCHEMAS)}") from None


def level_offsets(schema: ClassSchema) -> Sequence[int]:
    """Starting prior channel of each level."""
    offsets, acc = [], 0
    for n in schema.class_counts:
        offsets.append(acc)
        acc += n
    return offsets
