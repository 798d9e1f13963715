"""Strip-scheduled inference and training.

Each strip's input is the image band concatenated with a prior buffer
holding the previous strip's logits for the overlap rows. The first
``overlap_h`` rows of the prior are filled, the rest stay zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from ..segnet import ENCODER_STRIDE, SegNet, loss_terms
from ..tensorcore import AdaDeltaState, Tensor, active_meter, adadelta_step, add_n, backward, zero_grads
from .canvas import PageCanvas, resize_bilinear, resize_nearest
from .geometry import StripConfig, noprior_config, plan_strips

TEACHER_LOGIT = 8.0


@dataclass
class HierMask:
    """Per-level class maps (uint8, canvas resolution) and optional logits."""

    levels: List[np.ndarray]
    logits: Optional[List[np.ndarray]] = None


@dataclass
class StripTrace:
    step: int
    y_start: int
    v_h: int
    prior_in: np.ndarray  # (B, P, S_h, w) prior channels fed to this strip
    strip_logits: np.ndarray  # (B, P, S_h, w) network output for this strip


@dataclass
class StepRecord:
    strip: int
    loss: float
    level_losses: List[float]
    lr: float


# ---------------------------------------------------------------------- helpers


def _pad_to_stride(arr: np.ndarray, value=0) -> np.ndarray:
    h, w = arr.shape[-2:]
    ph = -h % ENCODER_STRIDE
    pw = -w % ENCODER_STRIDE
    if not (ph or pw):
        return arr
    pad = [(0, 0)] * (arr.ndim - 2) + [(0, ph), (0, pw)]
    return np.pad(arr, pad, constant_values=value)


def _forward(net: SegNet, x: np.ndarray) -> List[Tensor]:
    """Run the net on (B, C, H, W), zero-padding H, W up to the encoder stride."""
    return net(Tensor(_pad_to_stride(x)))


def _cropped(logits: Sequence[Tensor], h: int, w: int) -> List[np.ndarray]:
    return [lg.data[:, :, :h, :w] for lg in logits]


def _strip_input(pixels: np.ndarray, strip_h: int, y0: int, prior: Optional[np.ndarray]) -> np.ndarray:
    band = pixels[:, None, y0 : y0 + strip_h]
    if prior is None:
        return np.ascontiguousarray(band, dtype=np.float32)
    return np.concatenate([band, prior], axis=1).astype(np.float32, copy=False)


def _lowres_shape(net: SegNet, h: int, w: int):
    lh = net.config.lowres_size
    lw = max(1, int(round(w * lh / h)))
    return lh, lw


def _as_batch(pixels) -> np.ndarray:
    if isinstance(pixels, PageCanvas):
        pixels = pixels.pixels
    arr = np.asarray(pixels, dtype=np.float32)
    return arr[None] if arr.ndim == 2 else arr


def teacher_logits(gt_levels: Sequence[np.ndarray], class_counts: Sequence[int]) -> np.ndarray:
    """One-hot ground truth scaled to logit magnitude, all levels stacked on channels."""
    parts = []
    for labels, n in zip(gt_levels, class_counts):
        onehot = (labels[:, None] == np.arange(n)[None, :, None, None]).astype(np.float32)
        parts.append(onehot * TEACHER_LOGIT)
    return np.concatenate(parts, axis=1)


# ---------------------------------------------------------------------- inference


def infer_pages(net: SegNet, pixels, cfg: StripConfig, keep_logits: bool = False,
                trace: Optional[List[StripTrace]] = None) -> List[HierMask]:
    """Segment a batch of canvases (B, h, w); returns one HierMask per page."""
    pixels = _as_batch(pixels)
    b, h, w = pixels.shape
    if (h, w) != (cfg.h, cfg.w):
        raise ValueError(f"canvas is {h}x{w} but strip config expects {cfg.h}x{cfg.w}")
    counts = net.schema.class_counts
    if net.config.single_pass:
        logits = _infer_single_pass(net, pixels)
    else:
        logits = _infer_strips(net, pixels, cfg, trace)
    out = []
    for i in range(b):
        levels = [np.argmax(lg[i], axis=0).astype(np.uint8) for lg in logits]
        out.append(HierMask(levels, [lg[i] for lg in logits] if keep_logits else None))
    assert all(lg.shape[1] == n for lg, n in zip(logits, counts))
    return out


def infer_page(canvas, net: SegNet, cfg: StripConfig, keep_logits: bool = False,
               trace: Optional[List[StripTrace]] = None) -> HierMask:
    return infer_pages(net, canvas, cfg, keep_logits, trace)[0]


def _infer_strips(net: SegNet, pixels: np.ndarray, cfg: StripConfig,
                  trace: Optional[List[StripTrace]]) -> List[np.ndarray]:
    b, h, w = pixels.shape
    use_prior = net.config.uses_prior
    run_cfg = cfg if use_prior else noprior_config(cfg)
    if run_cfg.h != h:
        pixels = np.pad(pixels, ((0, 0), (0, run_cfg.h - h), (0, 0)))
    counts = net.schema.class_counts
    p_total = sum(counts)
    s_h, o_h = run_cfg.strip_h, run_cfg.overlap_h
    out = [np.zeros((b, n, run_cfg.h, w), dtype=np.float32) for n in counts]
    prior = np.zeros((b, p_total, s_h, w), dtype=np.float32) if use_prior else None
    for strip in plan_strips(run_cfg):
        x = _strip_input(pixels, s_h, strip.y_start, prior)
        seg = _cropped(_forward(net, x), s_h, w)
        if trace is not None:
            trace.append(StripTrace(strip.step, strip.y_start, strip.v_h,
                                    prior.copy() if prior is not None else np.zeros((b, 0, s_h, w), np.float32),
                                    np.concatenate(seg, axis=1).copy()))
        if use_prior and o_h:
            prior[:, :, :o_h] = np.concatenate([lg[:, :, s_h - o_h :] for lg in seg], axis=1)
        for li, lg in enumerate(seg):
            out[li][:, :, strip.y_start : strip.y_start + strip.v_h] = lg[:, :, : strip.v_h]
    return [o[:, :, :h] for o in out]


def _infer_single_pass(net: SegNet, pixels: np.ndarray) -> List[np.ndarray]:
    b, h, w = pixels.shape
    lh, lw = _lowres_shape(net, h, w)
    small = np.stack([resize_bilinear(p, lh, lw) for p in pixels]).astype(np.float32)
    seg = _cropped(_forward(net, small[:, None]), lh, lw)
    return [resize_nearest(lg, h, w).astype(np.float32) for lg in seg]


# ---------------------------------------------------------------------- training


def _step(net: SegNet, x: np.ndarray, labels: Sequence[np.ndarray], state: AdaDeltaState):
    """Forward, loss, backward and one optimizer update. Returns (logits data, record)."""
    logits = net(Tensor(x))
    terms = loss_terms(logits, labels, net.schema)
    loss = add_n(terms)
    values = [float(t.data) for t in terms]
    data = [lg.data for lg in logits]
    lr = state.current_lr
    zero_grads(net.params.values())
    backward(loss)
    del loss, terms, logits
    adadelta_step(net.params, state)
    return data, values, lr


def train_pages(net: SegNet, pixels, gt: Sequence[np.ndarray], cfg: StripConfig, state: AdaDeltaState,
                teacher_prior: bool = False, max_steps: Optional[int] = None,
                on_step: Optional[Callable[[StepRecord], None]] = None,
                should_stop: Optional[Callable[[], bool]] = None) -> List[StepRecord]:
    """Train on one batch of pages, one optimizer step per strip (batched over pages).

    Strip graphs are released after each step; the prior entering the next
    strip is a detached copy of this strip's overlap logits (or scaled
    one-hot ground truth in teacher mode).
    """
    pixels = _as_batch(pixels)
    gt = [np.asarray(g) if np.asarray(g).ndim == 3 else np.asarray(g)[None] for g in gt]
    b, h, w = pixels.shape
    schema = net.schema
    if len(gt) != schema.num_levels:
        raise ValueError(f"ground truth has {len(gt)} levels, schema has {schema.num_levels}")
    for li, g in enumerate(gt):
        if g.shape != (b, h, w):
            raise ValueError(f"level {li} ground truth shape {g.shape} != {(b, h, w)}")
        if g.max(initial=0) >= schema.class_counts[li]:
            raise ValueError(f"level {li} ground truth has labels outside the schema")
    records: List[StepRecord] = []

    def emit(rec):
        records.append(rec)
        if on_step is not None:
            on_step(rec)

    if net.config.single_pass:
        lh, lw = _lowres_shape(net, h, w)
        small = np.stack([resize_bilinear(p, lh, lw) for p in pixels]).astype(np.float32)[:, None]
        labels = [_pad_to_stride(resize_nearest(g, lh, lw)) for g in gt]
        _, values, lr = _step(net, _pad_to_stride(small), labels, state)
        emit(StepRecord(0, sum(values), values, lr))
        return records

    use_prior = net.config.uses_prior
    run_cfg = cfg if use_prior else noprior_config(cfg)
    if run_cfg.h != h:
        pad = ((0, 0), (0, run_cfg.h - h), (0, 0))
        pixels = np.pad(pixels, pad)
        gt = [np.pad(g, pad) for g in gt]
    s_h, o_h = run_cfg.strip_h, run_cfg.overlap_h
    prior = np.zeros((b, schema.prior_channels, s_h, w), dtype=np.float32) if use_prior else None
    meter = active_meter()
    if meter is not None and prior is not None:
        meter.track(prior, prior.nbytes)
    for strip in plan_strips(run_cfg):
        if max_steps is not None and len(records) >= max_steps:
            break
        if should_stop is not None and should_stop():
            break
        y0 = strip.y_start
        x = _pad_to_stride(_strip_input(pixels, s_h, y0, prior))
        labels = [_pad_to_stride(g[:, y0 : y0 + s_h]) for g in gt]
        data, values, lr = _step(net, x, labels, state)
        if use_prior and o_h:
            if teacher_prior:
                src = teacher_logits([g[:, y0 + s_h - o_h : y0 + s_h] for g in gt], schema.class_counts)
            else:
                src = np.concatenate([d[:, :, s_h - o_h : s_h, :w] for d in data], axis=1)
            prior[:, :, :o_h] = src
        del data
        emit(StepRecord(strip.step, sum(values), values, lr))
    return records


def train_page(canvas, gt: Sequence[np.ndarray], net: SegNet, state: AdaDeltaState, cfg: StripConfig,
               teacher_prior: bool = False) -> List[float]:
    """Single-page convenience wrapper; returns the loss of each strip."""
    return [r.loss for r in train_pages(net, canvas, gt, cfg, state, teacher_prior)]
