"""Command-line front end.

Subcommands: gen-data, train, infer, eval, overlay, trace-strips. Every
subcommand accepts ``--config FILE`` (JSON), repeated ``--set a.b=value``
overrides, ``--profile`` and ``--seed``; dedicated flags such as
``--steps`` win over ``--set``, which wins over the file, which wins over
the profile preset. Commands that write a directory also write
``resolved_config.json`` there.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .evalkit import decomposition_score, evaluate_pages, extract_instances, table_decompose_postprocess
from .formgen import emit_dataset, load_dataset, make_pages, read_pgm, write_pgm
from .overlay import PaletteError, overlay
from .segnet import NetworkConfig, build, get_schema, load_model, save_model
from .striprunner import Trainer, infer_pages, plan_strips, preprocess, read_loss_csv, resize_nearest

log = logging.getLogger("stripseg")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG = 0, 1, 2


class CommandError(RuntimeError):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.FIELD=VALUE",
                   help="override one config field (repeatable)")
    p.add_argument("--profile", choices=("desk", "paper"), help="preset (default desk)")
    p.add_argument("--seed", type=int, help="run seed (falls back to $SSEG_SEED, then 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stripseg", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="emit a synthetic form corpus")
    _common(p)
    p.add_argument("-n", type=int, default=100, help="number of pages")
    p.add_argument("--out", help="output directory (default paths.data_dir)")
    p.add_argument("--span-bias", type=float, help="probability of forcing a choicegroup across a strip cut")

    p = sub.add_parser("train", help="train a network")
    _common(p)
    p.add_argument("--data", help="corpus directory (train split); default: generate pages in memory")
    p.add_argument("--pages", type=int, default=8, help="in-memory pages when --data is not given")
    p.add_argument("--steps", type=int, help="optimizer steps (one per strip)")
    p.add_argument("--variant", help="network variant")
    p.add_argument("--out", help="run directory (default paths.run_dir)")

    p = sub.add_parser("infer", help="segment page images into per-level mask PGMs")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="PGM image or directory searched for *.img.pgm")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score predictions against a corpus split")
    _common(p)
    p.add_argument("--data", required=True, help="corpus directory")
    p.add_argument("--checkpoint", help="model to run on the split")
    p.add_argument("--pred", help="directory of infer output to score instead of running a model")
    p.add_argument("--split", help="corpus split (default eval.split)")
    p.add_argument("--limit", type=int, help="score at most this many pages")
    p.add_argument("--out", required=True)

    p = sub.add_parser("overlay", help="tint masks over a page image")
    p.add_argument("--image", required=True)
    p.add_argument("--masks", nargs="+", required=True, help="mask PGMs, one per level listed in --levels")
    p.add_argument("--levels", nargs="+", type=int, help="1-based level of each mask (default 1..k)")
    p.add_argument("--schema", default="document")
    p.add_argument("--palette", help="JSON object mapping class name to [r, g, b]")
    p.add_argument("--alpha", type=float, default=0.45)
    p.add_argument("--out", required=True, help=".png or .ppm")

    p = sub.add_parser("trace-strips", help="print the strip plan as JSON")
    _common(p)
    p.add_argument("--out", help="write to a file instead of stdout")
    return parser


def resolve_config(args, extra: Sequence[str] = ()) -> RunConfig:
    return load_config(args.config, list(args.set) + list(extra), args.profile, args.seed)


def _ensure_dir(path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_net(path) -> "object":
    path = Path(path)
    if not path.is_file():
        raise CommandError(f"checkpoint not found: {path}")
    try:
        return load_model(path)
    except (ValueError, KeyError) as exc:
        raise CommandError(f"cannot load checkpoint {path}: {exc}") from None


# ---------------------------------------------------------------- commands


def cmd_gen_data(args) -> int:
    extra = [] if args.span_bias is None else [f"gen.span_bias={args.span_bias}"]
    cfg = resolve_config(args, extra)
    if args.n < 1:
        raise ConfigError("n", "must be >= 1")
    out = _ensure_dir(args.out or cfg.paths.data_dir)
    emit_dataset(args.n, cfg.seed, out, cfg.profile, cfg.gen)
    cfg.write_snapshot(out)
    log.info("wrote %d pages to %s", args.n, out)
    return EXIT_OK


def _training_pages(cfg: RunConfig, data: Optional[str], pages: int):
    if data:
        samples = load_dataset(data, split="train")
        if not samples:
            raise CommandError(f"no training samples under {data}")
        imgs = np.stack([s.image for s in samples])
        masks = [np.stack([s.masks[li] for s in samples]) for li in range(len(samples[0].masks))]
    else:
        if pages < 1:
            raise ConfigError("pages", "must be >= 1")
        imgs, masks, _ = make_pages(pages, cfg.seed, cfg.gen)
    if imgs.shape[1:] != (cfg.strips.h, cfg.strips.w):
        raise CommandError(f"pages are {imgs.shape[1]}x{imgs.shape[2]}, canvas is {cfg.strips.h}x{cfg.strips.w}")
    return imgs, masks


def cmd_train(args) -> int:
    extra = []
    if args.steps is not None:
        extra.append(f"train.steps={args.steps}")
    if args.variant is not None:
        extra.append(f"network.variant={json.dumps(args.variant)}")
    cfg = resolve_config(args, extra)
    if cfg.network.schema != cfg.gen.schema:
        raise ConfigError("network.schema", f"{cfg.network.schema!r} but data schema is {cfg.gen.schema!r}")
    out = _ensure_dir(args.out or cfg.paths.run_dir)
    cfg.write_snapshot(out)
    imgs, masks = _training_pages(cfg, args.data, args.pages)
    net = build(cfg.network)
    trainer = Trainer(net, imgs, masks, cfg.strips, cfg.train)
    every = cfg.train.checkpoint_every
    t0 = time.time()

    def callback(tr, row):
        if row.step % 50 == 0 or row.step == cfg.train.steps:
            log.info("step %d loss %.4f lr %g (%.0fs)", row.step, row.loss, row.lr, time.time() - t0)
        if every and row.step % every == 0:
            save_model(net, out / f"checkpoint_{row.step:06d}.sseg")
        return False

    trainer.run(callback=callback)
    save_model(net, out / "model.sseg")
    trainer.write_csv(out / "loss.csv")
    if trainer.log:
        from .plotting import plot_loss

        plot_loss(read_loss_csv(out / "loss.csv"), out / "loss.png")
    return EXIT_OK


def _image_stem(path: Path) -> str:
    name = path.name
    for suffix in (".img.pgm", ".pgm"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return path.stem


def _collect_images(src: Path) -> List[Path]:
    if src.is_file():
        return [src]
    if src.is_dir():
        found = sorted(src.rglob("*.img.pgm"))
        if not found:
            found = sorted(p for p in src.rglob("*.pgm") if not p.name.endswith(".msk.pgm"))
        return found
    raise CommandError(f"input not found: {src}")


def to_original(mask: np.ndarray, record) -> np.ndarray:
    """Map a canvas-resolution class map back onto the source image grid."""
    rows = np.zeros((record.resized_h, mask.shape[1]), dtype=mask.dtype)
    keep = min(record.resized_h, mask.shape[0])
    rows[:keep] = mask[:keep]
    if rows.shape == (record.orig_h, record.orig_w):
        return rows
    return resize_nearest(rows, record.orig_h, record.orig_w)


def predict_images(net, images: Sequence[np.ndarray], cfg: RunConfig, batch: int = 4):
    """Per image: list of per-level class maps on the image's own grid."""
    canvases = [preprocess(img, cfg.strips) for img in images]
    out = []
    for i in range(0, len(canvases), batch):
        chunk = canvases[i : i + batch]
        preds = infer_pages(net, np.stack([c.pixels for c in chunk]), cfg.strips)
        for c, p in zip(chunk, preds):
            out.append([to_original(m, c.record) for m in p.levels])
    return out


def cmd_infer(args) -> int:
    cfg = resolve_config(args)
    net = _load_net(args.checkpoint)
    src = Path(args.input)
    paths = _collect_images(src)
    if not paths:
        raise CommandError(f"no images under {src}")
    out = _ensure_dir(args.out)
    cfg.write_snapshot(out)
    for path in paths:
        levels = predict_images(net, [read_pgm(path)], cfg)[0]
        rel = path.parent.relative_to(src) if src.is_dir() else Path(".")
        dest = _ensure_dir(out / rel)
        for li, m in enumerate(levels):
            write_pgm(dest / f"{_image_stem(path)}.L{li + 1}.msk.pgm", m)
    log.info("segmented %d images into %s", len(paths), out)
    return EXIT_OK


def _decomposition(preds, gts, schema, area_frac):
    """Mean per-page row/column scores over pages that contain a ground-truth table."""
    table_id = schema.class_id(0, "table")
    row_id, col_id = schema.class_id(1, "table_row"), schema.class_id(2, "table_column")
    scores = []
    for p, g in zip(preds, gts):
        tables = extract_instances(g[0], table_id, use_hull=False, name="table")
        if not tables:
            continue
        rows, cols = table_decompose_postprocess(p[1], p[2], tables, area_frac, row_id, col_id)
        gt_rows = extract_instances(g[1], row_id, use_hull=False, name="table_row", level=1)
        gt_cols = extract_instances(g[2], col_id, use_hull=False, name="table_column", level=2)
        scores.append(decomposition_score(rows, cols, gt_rows, gt_cols))
    if not scores:
        return None
    return {"pages": len(scores), **{k: float(np.mean([s[k] for s in scores])) for k in ("precision", "recall", "f1")}}


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    if bool(args.checkpoint) == bool(args.pred):
        raise CommandError("give exactly one of --checkpoint or --pred")
    split = args.split or cfg.eval.split
    samples = load_dataset(args.data, split=split, limit=args.limit)
    if not samples:
        raise CommandError(f"no samples in split {split!r} under {args.data}")
    gts = [s.masks for s in samples]
    if args.checkpoint:
        net = _load_net(args.checkpoint)
        schema = net.schema
        preds = predict_images(net, [s.image for s in samples], cfg)
    else:
        schema = get_schema(cfg.gen.schema)
        preds = []
        for s in samples:
            base = Path(args.pred) / s.split
            names = [base / f"{s.index:06}.L{li + 1}.msk.pgm" for li in range(schema.num_levels)]
            missing = [str(n) for n in names if not n.is_file()]
            if missing:
                raise CommandError(f"prediction missing: {missing[0]}")
            preds.append([read_pgm(n) for n in names])
    if len(gts[0]) != schema.num_levels:
        raise CommandError(f"corpus has {len(gts[0])} levels, model schema {schema.name!r} has {schema.num_levels}")
    out = _ensure_dir(args.out)
    cfg.write_snapshot(out)
    report = evaluate_pages(preds, gts, schema, cfg.eval.thresholds, cfg.eval.use_hull,
                            meta={"split": split})
    if schema.name == "tl":
        report.decomposition = _decomposition(preds, gts, schema, cfg.eval.area_frac)
    (out / "metrics.json").write_text(report.to_json() + "\n")
    (out / "metrics.txt").write_text(report.to_text())
    from .plotting import plot_report

    plot_report(report, out)
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_overlay(args) -> int:
    schema = get_schema(args.schema)
    levels = args.levels or list(range(1, len(args.masks) + 1))
    if len(levels) != len(args.masks):
        raise CommandError("--levels must list one level per mask")
    if any(not 1 <= lv <= schema.num_levels for lv in levels):
        raise CommandError(f"levels must lie in 1..{schema.num_levels}")
    for p in [args.image] + list(args.masks):
        if not Path(p).is_file():
            raise CommandError(f"file not found: {p}")
    palette = None
    if args.palette:
        raw = json.loads(Path(args.palette).read_text())
        palette = {k: tuple(int(c) for c in v) for k, v in raw.items()}
    image = read_pgm(args.image)
    masks = [read_pgm(p) for p in args.masks]
    names = [schema.levels[lv - 1] for lv in levels]
    overlay(image, masks, names, args.out, palette, args.alpha)
    return EXIT_OK


def cmd_trace_strips(args) -> int:
    cfg = resolve_config(args)
    plan = plan_strips(cfg.strips).to_dict()
    text = json.dumps(plan, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "overlay": cmd_overlay,
    "trace-strips": cmd_trace_strips,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CommandError, PaletteError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
