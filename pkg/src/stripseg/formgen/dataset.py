"""Corpus emission and loading (binary PGM images/masks, JSON-lines scenes, manifest)."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..segnet.schema import get_schema
from .render import render_and_rasterize
from .scene import DocumentScene, GenParams, SceneObject, generate_scene

SPLITS = ("train", "val", "test")


def write_pgm(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.ndim != 2 or arr.dtype != np.uint8:
        raise ValueError(f"PGM writer needs a 2D uint8 array, got {arr.dtype} {arr.shape}")
    h, w = arr.shape
    try:
        with open(path, "wb") as fh:
            fh.write(b"P5\n%d %d\n255\n" % (w, h))
            fh.write(np.ascontiguousarray(arr).tobytes())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    fields, pos = [], 0
    while len(fields) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end : end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    if fields[0] != b"P5" or int(fields[3]) != 255:
        raise ValueError(f"{path}: not an 8-bit binary PGM")
    w, h = int(fields[1]), int(fields[2])
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos + 1)
    return pixels.reshape(h, w).copy()


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)


def profile_params(profile: str = "desk", **overrides) -> GenParams:
    if profile == "desk":
        base = {}
    elif profile == "paper":
        base = dict(width=1000, height=1800, scale=1000 / 208, border_width=4, span_rows=(400, 800, 1200))
    else:
        raise ValueError(f"unknown profile {profile!r}")
    base.update(overrides)
    return GenParams(**base)


def sample_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def split_assignment(n: int, seed: int) -> List[str]:
    """80/10/10 train/val/test by a seeded shuffle of indices."""
    n_train, n_val = (8 * n) // 10, n // 10
    order = np.random.default_rng(seed).permutation(n)
    tags = [""] * n
    for rank, i in enumerate(order):
        tags[i] = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
    return tags


def sample_paths(out_dir, split: str, index: int, levels: int) -> Dict[str, Path]:
    base = Path(out_dir) / split
    paths = {"image": base / f"{index:06}.img.pgm", "scene": base / f"{index:06}.scene.jsonl"}
    for li in range(levels):
        paths[f"L{li + 1}"] = base / f"{index:06}.L{li + 1}.msk.pgm"
    return paths


def emit_dataset(n: int, seed: int, out_dir, profile: str = "desk",
                 params: Optional[GenParams] = None) -> Dict:
    """Write ``n`` samples plus ``manifest.json``; returns the manifest."""
    params = params or profile_params(profile)
    schema = get_schema(params.schema)
    out_dir = Path(out_dir)
    for split in SPLITS:
        os.makedirs(out_dir / split, exist_ok=True)
    tags = split_assignment(n, seed)
    samples = []
    for i in range(n):
        s = sample_seed(seed, i)
        scene = generate_scene(s, params)
        img, masks = render_and_rasterize(scene, schema)
        paths = sample_paths(out_dir, tags[i], i, schema.num_levels)
        write_pgm(paths["image"], to_uint8(img))
        for li, m in enumerate(masks):
            write_pgm(paths[f"L{li + 1}"], m)
        with open(paths["scene"], "w") as fh:
            for rec in scene.to_records():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        samples.append({"index": i, "seed": s, "split": tags[i]})
    manifest = {
        "n": n,
        "seed": seed,
        "profile": profile,
        "schema": schema.to_dict(),
        "params": params.to_dict(),
        "samples": samples,
        "splits": {sp: [i for i in range(n) if tags[i] == sp] for sp in SPLITS},
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


@dataclass
class Sample:
    index: int
    split: str
    seed: int
    image: np.ndarray  # float32 in [0, 1]
    masks: List[np.ndarray]
    scene: DocumentScene


def load_dataset(out_dir, split: Optional[str] = None, limit: Optional[int] = None) -> List[Sample]:
    out_dir = Path(out_dir)
    with open(out_dir / "manifest.json") as fh:
        manifest = json.load(fh)
    params = GenParams.from_dict(manifest["params"])
    levels = len(manifest["schema"]["levels"])
    out = []
    for rec in manifest["samples"]:
        if split is not None and rec["split"] != split:
            continue
        paths = sample_paths(out_dir, rec["split"], rec["index"], levels)
        with open(paths["scene"]) as fh:
            objs = [SceneObject.from_dict(json.loads(line)) for line in fh if line.strip()]
        scene = DocumentScene(params.width, params.height, rec["seed"], params, objs)
        img = read_pgm(paths["image"]).astype(np.float32) / 255.0
        masks = [read_pgm(paths[f"L{li + 1}"]) for li in range(levels)]
        out.append(Sample(rec["index"], rec["split"], rec["seed"], img, masks, scene))
        if limit is not None and len(out) >= limit:
            break
    return out


def make_pages(n: int, seed: int, params: Optional[GenParams] = None):
    """In-memory corpus: (images (n, h, w) float32, per-level masks (n, h, w), scenes)."""
    params = params or GenParams()
    schema = get_schema(params.schema)
    imgs, masks, scenes = [], [[] for _ in schema.levels], []
    for i in range(n):
        scene = generate_scene(sample_seed(seed, i), params)
        img, ms = render_and_rasterize(scene, schema)
        imgs.append(to_uint8(img).astype(np.float32) / 255.0)
        for li, m in enumerate(ms):
            masks[li].append(m)
        scenes.append(scene)
    return np.stack(imgs), [np.stack(m) for m in masks], scenes
