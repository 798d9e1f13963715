"""Strip geometry: overlapping horizontal bands over a fixed page canvas."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, List


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class StripConfig:
    w: int = 208
    h: int = 464
    strip_h: int = 176
    overlap_h: int = 80

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise GeometryError(f"canvas must be non-empty, got {self.h}x{self.w}")
        if not 0 <= self.overlap_h < self.strip_h <= self.h:
            raise GeometryError(
                f"need 0 <= overlap_h < strip_h <= h, got overlap_h={self.overlap_h} "
                f"strip_h={self.strip_h} h={self.h}"
            )
        if (self.h - self.strip_h) % self.stride:
            raise GeometryError(
                f"(h - strip_h) = {self.h - self.strip_h} is not a multiple of strip_h - overlap_h = "
                f"{self.stride}; nearest valid h is {nearest_valid_h(self.h, self.strip_h, self.overlap_h)}"
            )

    @property
    def stride(self) -> int:
        return self.strip_h - self.overlap_h

    @property
    def strip_count(self) -> int:
        return 1 + (self.h - self.strip_h) // self.stride

    def to_dict(self) -> Dict:
        return asdict(self)


def nearest_valid_h(h: int, strip_h: int, overlap_h: int) -> int:
    stride = strip_h - overlap_h
    k = max(0, round((h - strip_h) / stride))
    return strip_h + k * stride


@dataclass(frozen=True)
class Strip:
    step: int
    y_start: int
    v_h: int

    @property
    def rows(self) -> range:
        """Canvas rows this strip writes into the output mask."""
        return range(self.y_start, self.y_start + self.v_h)


@dataclass(frozen=True)
class StripPlan:
    config: StripConfig
    strips: tuple

    def __len__(self) -> int:
        return len(self.strips)

    def __iter__(self):
        return iter(self.strips)

    def to_dict(self) -> Dict:
        return {
            "config": self.config.to_dict(),
            "strip_count": len(self.strips),
            "strips": [asdict(s) for s in self.strips],
        }


def plan_strips(cfg: StripConfig) -> StripPlan:
    strips: List[Strip] = []
    count = cfg.strip_count
    for step in range(count):
        y_start = cfg.stride * step
        v_h = cfg.strip_h if step == count - 1 else cfg.stride
        strips.append(Strip(step, y_start, v_h))
    return StripPlan(cfg, tuple(strips))


DESK_STRIPS = StripConfig(w=208, h=464, strip_h=176, overlap_h=80)
PAPER_STRIPS = StripConfig(w=1000, h=1800, strip_h=600, overlap_h=200)


def noprior_config(cfg: StripConfig) -> StripConfig:
    """Abutting strips of the same height; the canvas grows to a whole number of strips."""
    h = -(-cfg.h // cfg.strip_h) * cfg.strip_h
    return StripConfig(w=cfg.w, h=h, strip_h=cfg.strip_h, overlap_h=0)
