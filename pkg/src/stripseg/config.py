"""Run configuration: profile presets, JSON config files and ``--set`` overrides.

A config file is JSON with optional sections ``strips``, ``network``,
``train``, ``gen``, ``eval`` and ``paths`` plus top-level ``profile`` and
``seed``. Values not given fall back to the profile preset. Overrides use
dotted paths, e.g. ``--set train.steps=50 --set network.variant=noprior``;
the value is parsed as JSON when possible, else taken as a string.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

from .formgen import GenParams, profile_params
from .segnet import NetworkConfig
from .striprunner import DESK_STRIPS, PAPER_STRIPS, StripConfig, TrainConfig

PROFILES = ("desk", "paper")
SEED_ENV = "SSEG_SEED"
DESK_LR = 2.0


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the dotted field path at fault."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class EvalConfig:
    thresholds: tuple = (0.7,)
    use_hull: bool = True
    area_frac: float = 0.02
    split: str = "test"

    def __post_init__(self):
        self.thresholds = tuple(float(t) for t in self.thresholds)
        if not self.thresholds or any(not 0 < t <= 1 for t in self.thresholds):
            raise ValueError(f"thresholds must lie in (0, 1], got {self.thresholds}")
        if not 0 <= self.area_frac < 1:
            raise ValueError(f"area_frac must lie in [0, 1), got {self.area_frac}")


@dataclass
class PathsConfig:
    data_dir: str = "data"
    run_dir: str = "run"
    checkpoint: str = ""


@dataclass
class RunConfig:
    profile: str = "desk"
    seed: int = 0
    strips: StripConfig = field(default_factory=lambda: DESK_STRIPS)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    gen: GenParams = field(default_factory=GenParams)
    eval: EvalConfig = field(default_factory=EvalConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def to_dict(self, include_paths: bool = True) -> Dict[str, Any]:
        d = {"profile": self.profile, "seed": self.seed}
        for name in ("strips", "network", "train", "gen", "eval") + (("paths",) if include_paths else ()):
            d[name] = _jsonable(dataclasses.asdict(getattr(self, name)))
        return d

    def snapshot(self) -> str:
        """Location-independent resolved config (paths are left out)."""
        return json.dumps(self.to_dict(include_paths=False), indent=2, sort_keys=True) + "\n"

    def write_snapshot(self, directory) -> Path:
        path = Path(directory) / "resolved_config.json"
        path.write_text(self.snapshot())
        return path


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


SECTIONS = {"strips": StripConfig, "network": NetworkConfig, "train": TrainConfig, "gen": GenParams,
            "eval": EvalConfig, "paths": PathsConfig}


def profile_defaults(profile: str) -> Dict[str, Dict[str, Any]]:
    if profile not in PROFILES:
        raise ConfigError("profile", f"must be one of {PROFILES}, got {profile!r}")
    if profile == "desk":
        strips = DESK_STRIPS
        net = NetworkConfig(base_width=8, lowres_size=DESK_STRIPS.h // 2)
        # the small desk network needs a larger AdaDelta multiplier to converge within a few thousand steps
        train = TrainConfig(batch_size=4, lr_multiplier=DESK_LR)
        gen = profile_params("desk")
    else:
        strips = PAPER_STRIPS
        net = NetworkConfig(base_width=64, lowres_size=792)
        train = TrainConfig(batch_size=32)
        gen = profile_params("paper")
    gen = dataclasses.replace(gen, span_rows=tuple(strips.stride * k for k in range(1, strips.strip_count)))
    return {
        "strips": _jsonable(dataclasses.asdict(strips)),
        "network": _jsonable(dataclasses.asdict(net)),
        "train": _jsonable(dataclasses.asdict(train)),
        "gen": _jsonable(dataclasses.asdict(gen)),
        "eval": _jsonable(dataclasses.asdict(EvalConfig())),
        "paths": _jsonable(dataclasses.asdict(PathsConfig())),
    }


def parse_override(item: str):
    if "=" not in item:
        raise ConfigError(item, "override must look like section.field=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _check_type(path: str, default, value):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        value = float(value)
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
    elif isinstance(default, (list, tuple)):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {value!r}")
    return value


def resolve(file_data: Optional[Dict[str, Any]] = None, overrides: Iterable[str] = (),
            profile: Optional[str] = None, seed: Optional[int] = None) -> RunConfig:
    """Merge profile preset <- config file <- ``--set`` overrides <- explicit flags."""
    data = dict(file_data or {})
    pairs = [parse_override(o) for o in overrides]
    for key, value in pairs:
        if key in ("profile", "seed"):
            data[key] = value
    prof = profile or data.get("profile", "desk")
    merged = profile_defaults(prof)
    for section, values in data.items():
        if section in ("profile", "seed"):
            continue
        if section not in SECTIONS:
            raise ConfigError(section, f"unknown section (expected one of {sorted(SECTIONS)})")
        if not isinstance(values, dict):
            raise ConfigError(section, "must be an object")
        _merge(merged, section, values)
    for key, value in pairs:
        if key in ("profile", "seed"):
            continue
        section, _, name = key.partition(".")
        if section not in SECTIONS or not name:
            raise ConfigError(key, "unknown config field")
        _merge(merged, section, {name: value})

    if seed is None:
        seed = data.get("seed")
    if seed is None and os.environ.get(SEED_ENV, "").strip():
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(SEED_ENV, f"not an integer: {os.environ[SEED_ENV]!r}") from None
    seed = 0 if seed is None else seed
    _check_type("seed", 0, seed)
    # the run seed drives every seeded component unless a section pins its own
    for section in ("network", "train"):
        if "seed" not in data.get(section, {}) and not any(k == f"{section}.seed" for k, _ in pairs):
            merged[section]["seed"] = seed

    built = {}
    for section, cls in SECTIONS.items():
        try:
            built[section] = cls(**merged[section])
        except (TypeError, ValueError) as exc:
            raise ConfigError(section, str(exc)) from None
    cfg = RunConfig(profile=prof, seed=seed, **built)
    if cfg.gen.width != cfg.strips.w or cfg.gen.height != cfg.strips.h:
        raise ConfigError("gen.width", f"generator canvas {cfg.gen.height}x{cfg.gen.width} differs from "
                                       f"strips canvas {cfg.strips.h}x{cfg.strips.w}")
    return cfg


def _merge(merged, section, values):
    defaults = merged[section]
    for name, value in values.items():
        path = f"{section}.{name}"
        if name not in defaults:
            raise ConfigError(path, "unknown field")
        defaults[name] = _check_type(path, defaults[name], value)


def load_config(path=None, overrides: Iterable[str] = (), profile: Optional[str] = None,
                seed: Optional[int] = None) -> RunConfig:
    data = None
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError("config", f"file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{path} is not valid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be a JSON object")
    return resolve(data, overrides, profile, seed)
