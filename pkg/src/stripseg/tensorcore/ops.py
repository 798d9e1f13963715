"""Differentiable layer primitives on NCHW tensors."""

from __future__ import annotations

import contextlib

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .memory import active_meter
from .tensor import Tensor, make_result


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested op."""


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # conv | conv_transpose | maxpool | relu | concat
    kh: int = 1
    kw: int = 1
    cin: int = 1
    cout: int = 1
    stride: int = 1
    dilation: Tuple[int, int] = (1, 1)
    padding: str = "same"

    def __post_init__(self):
        if self.kind not in ("conv", "conv_transpose", "maxpool", "relu", "concat"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kh < 1 or self.kw < 1:
            raise ValueError(f"kernel dims must be >= 1, got {self.kh}x{self.kw}")
        if self.stride not in (1, 2):
            raise ValueError(f"stride must be 1 or 2, got {self.stride}")
        if min(self.dilation) < 1:
            raise ValueError(f"dilation components must be >= 1, got {self.dilation}")
        if self.padding not in ("same", "valid"):
            raise ValueError(f"padding must be 'same' or 'valid', got {self.padding!r}")

    @property
    def weight_shape(self) -> tuple:
        if self.kind == "conv_transpose":
            return (self.cin, self.cout, self.kh, self.kw)
        return (self.cout, self.cin, self.kh, self.kw)

    @property
    def fan_in(self) -> int:
        return self.cin * self.kh * self.kw


class _Saved:
    """Holder for arrays kept alive by a backward closure (metered)."""

    def __init__(self, **arrays):
        self.__dict__.update(arrays)
        meter = active_meter()
        if meter is not None:
            meter.track(self, sum(a.nbytes for a in arrays.values()))


# ---------------------------------------------------------------------------
# convolution


def _same_pads(size: int, k: int, d: int, stride: int) -> Tuple[int, int, int]:
    out = -(-size // stride)
    total = max((out - 1) * stride + (k - 1) * d + 1 - size, 0)
    return total // 2, total - total // 2, out


def _conv_geometry(h: int, w: int, spec: LayerSpec):
    dy, dx = spec.dilation
    if spec.padding == "same":
        pt, pb, ho = _same_pads(h, spec.kh, dy, spec.stride)
        pl, pr, wo = _same_pads(w, spec.kw, dx, spec.stride)
    else:
        pt = pb = pl = pr = 0
        ho = (h - (spec.kh - 1) * dy - 1) // spec.stride + 1
        wo = (w - (spec.kw - 1) * dx - 1) // spec.stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(
            f"input {h}x{w} too small for kernel {spec.kh}x{spec.kw} "
            f"dilation {spec.dilation} with {spec.padding} padding"
        )
    return (pt, pb, pl, pr), ho, wo


def _im2col(xp: np.ndarray, spec: LayerSpec, ho: int, wo: int) -> np.ndarray:
    n, c = xp.shape[:2]
    if spec.kh == spec.kw == 1 and spec.stride == 1:
        return np.ascontiguousarray(xp).reshape(n, c, ho * wo)
    dy, dx = spec.dilation
    s = spec.stride
    cols = np.empty((n, c, spec.kh, spec.kw, ho, wo), dtype=xp.dtype)
    for i in range(spec.kh):
        y0 = i * dy
        for j in range(spec.kw):
            x0 = j * dx
            cols[:, :, i, j] = xp[:, :, y0 : y0 + s * (ho - 1) + 1 : s, x0 : x0 + s * (wo - 1) + 1 : s]
    return cols.reshape(n, c * spec.kh * spec.kw, ho * wo)


def _col2im(dcols: np.ndarray, padded_shape: tuple, spec: LayerSpec, ho: int, wo: int) -> np.ndarray:
    n, c = padded_shape[:2]
    dy, dx = spec.dilation
    s = spec.stride
    if spec.kh == spec.kw == 1 and spec.stride == 1:
        return dcols.reshape(padded_shape)
    dcols = dcols.reshape(n, c, spec.kh, spec.kw, ho, wo)
    dxp = np.zeros(padded_shape, dtype=dcols.dtype)
    for i in range(spec.kh):
        y0 = i * dy
        for j in range(spec.kw):
            x0 = j * dx
            dxp[:, :, y0 : y0 + s * (ho - 1) + 1 : s, x0 : x0 + s * (wo - 1) + 1 : s] += dcols[:, :, i, j]
    return dxp


def _batched_outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """sum_n a[n] @ b[n].T for (N, P, L) and (N, Q, L) operands."""
    acc = a[0] @ b[0].T
    for k in range(1, a.shape[0]):
        acc += a[k] @ b[k].T
    return acc


def _check_conv_operands(x: Tensor, spec: LayerSpec, weight: Tensor, bias: Optional[Tensor]):
    if x.data.ndim != 4:
        raise ShapeError(f"{spec.kind} expects NCHW input, got shape {x.shape}")
    if x.shape[1] != spec.cin:
        raise ShapeError(f"{spec.kind}: input has {x.shape[1]} channels, spec expects {spec.cin}")
    if weight.shape != spec.weight_shape:
        raise ShapeError(f"{spec.kind}: weight shape {weight.shape} != expected {spec.weight_shape}")
    if bias is not None and bias.shape != (spec.cout,):
        raise ShapeError(f"{spec.kind}: bias shape {bias.shape} != expected ({spec.cout},)")


def conv2d(x: Tensor, spec: LayerSpec, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Cross-correlation with optional dilation, stride 1/2, same/valid padding.

    "same" pads symmetrically with the odd pixel on the bottom/right.
    """
    if spec.kind != "conv":
        raise ValueError(f"conv2d needs a conv spec, got {spec.kind}")
    _check_conv_operands(x, spec, weight, bias)
    if spec.stride == 1 and not (spec.kh == spec.kw == 1):
        return _conv2d_shifted(x, spec, weight, bias)
    return _conv2d_im2col(x, spec, weight, bias)


def _conv2d_shifted(x: Tensor, spec: LayerSpec, weight: Tensor, bias: Optional[Tensor]) -> Tensor:
    # Stride-1 path on the flattened padded grid: a kernel tap (i, j) is a
    # constant flat offset, so one GEMM produces every tap's contribution and
    # the output is a sum of shifted slices. Output rows carry Wp - Wo junk
    # columns that are dropped.
    n, c, h, w = x.shape
    (pt, pb, pl, pr), ho, wo = _conv_geometry(h, w, spec)
    dy, dx = spec.dilation
    cout, kh, kw = spec.cout, spec.kh, spec.kw
    extra = 1 if kw > 1 else 0
    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb + extra), (pl, pr)))
    hp, wp = xp.shape[2:]
    xf = xp.reshape(n, c, hp * wp)
    length = ho * wp
    offsets = [i * dy * wp + j * dx for i in range(kh) for j in range(kw)]
    taps = len(offsets)
    # (taps * cout, c): row block t holds W[:, :, i, j]
    wt = np.ascontiguousarray(weight.data.transpose(2, 3, 0, 1).reshape(taps * cout, c))
    out = np.empty((n, cout, length), dtype=np.result_type(x.data, weight.data))
    for b in range(n):
        big = wt @ xf[b]
        acc = big[0:cout, offsets[0] : offsets[0] + length].copy()
        for t in range(1, taps):
            acc += big[t * cout : (t + 1) * cout, offsets[t] : offsets[t] + length]
        out[b] = acc
    del xp
    out = np.ascontiguousarray(out.reshape(n, cout, ho, wp)[:, :, :, :wo])
    if bias is not None:
        out += bias.data[None, :, None, None]
    has_bias = bias is not None

    def backward_fn(g):
        gp = np.zeros((n, cout, ho, wp), dtype=g.dtype)
        gp[:, :, :, :wo] = g
        gf = gp.reshape(n, cout, length)
        gx = gw = gb = None
        if x.requires_grad:
            wtt = np.ascontiguousarray(weight.data.transpose(2, 3, 1, 0).reshape(taps * c, cout))
            gx = np.empty((n, c, h, w), dtype=g.dtype)
            for b in range(n):
                big = wtt @ gf[b]
                dxf = np.zeros((c, hp * wp), dtype=g.dtype)
                for t in range(taps):
                    dxf[:, offsets[t] : offsets[t] + length] += big[t * c : (t + 1) * c]
                gx[b] = dxf.reshape(c, hp, wp)[:, pt : pt + h, pl : pl + w]
        if weight.requires_grad:
            xp_ = np.pad(x.data, ((0, 0), (0, 0), (pt, pb + extra), (pl, pr))).reshape(n, c, hp * wp)
            gwt = np.zeros((taps, cout, c), dtype=g.dtype)
            for b in range(n):
                for t in range(taps):
                    gwt[t] += gf[b] @ xp_[b, :, offsets[t] : offsets[t] + length].T
            gw = gwt.reshape(kh, kw, cout, c).transpose(2, 3, 0, 1).copy()
        if has_bias and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw, gb) if has_bias else (gx, gw)

    parents = (x, weight, bias) if has_bias else (x, weight)
    return make_result(out, parents, backward_fn)


def _conv2d_im2col(x: Tensor, spec: LayerSpec, weight: Tensor, bias: Optional[Tensor]) -> Tensor:
    n, c, h, w = x.shape
    (pt, pb, pl, pr), ho, wo = _conv_geometry(h, w, spec)
    xd = x.data
    xp = np.pad(xd, ((0, 0), (0, 0), (pt, pb), (pl, pr))) if (pt or pb or pl or pr) else xd
    cols = _im2col(xp, spec, ho, wo)
    wmat = weight.data.reshape(spec.cout, -1)
    out = np.matmul(wmat, cols)
    if bias is not None:
        out += bias.data[:, None]
    out = out.reshape(n, spec.cout, ho, wo)
    del cols

    padded_shape = xp.shape
    has_bias = bias is not None

    def backward_fn(g):
        g = g.reshape(n, spec.cout, ho * wo)
        gx = gw = gb = None
        if x.requires_grad:
            dcols = np.matmul(wmat.T, g)
            dxp = _col2im(dcols, padded_shape, spec, ho, wo)
            gx = dxp[:, :, pt : pt + h, pl : pl + w]
        if weight.requires_grad:
            xp_ = np.pad(xd, ((0, 0), (0, 0), (pt, pb), (pl, pr))) if (pt or pb or pl or pr) else xd
            cols_ = _im2col(xp_, spec, ho, wo)
            gw = _batched_outer(g, cols_).reshape(spec.weight_shape)
        if has_bias and bias.requires_grad:
            gb = g.sum(axis=(0, 2))
        return (gx, gw, gb) if has_bias else (gx, gw)

    parents = (x, weight, bias) if has_bias else (x, weight)
    return make_result(out, parents, backward_fn)


def conv_transpose2d(x: Tensor, spec: LayerSpec, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Transposed convolution; output size is ``(H - 1) * stride + kh``.

    With the network's 2x2 kernel at stride 2 this exactly doubles H and W.
    """
    if spec.kind != "conv_transpose":
        raise ValueError(f"conv_transpose2d needs a conv_transpose spec, got {spec.kind}")
    if spec.stride != 2:
        raise ValueError(f"conv_transpose2d supports stride 2 only, got {spec.stride}")
    if spec.dilation != (1, 1):
        raise ValueError("conv_transpose2d does not support dilation")
    _check_conv_operands(x, spec, weight, bias)
    n, c, h, w = x.shape
    s = spec.stride
    kh, kw, cout = spec.kh, spec.kw, spec.cout
    ho, wo = (h - 1) * s + kh, (w - 1) * s + kw
    wmat = weight.data.reshape(c, cout * kh * kw)
    xd = x.data
    cols = np.matmul(wmat.T, xd.reshape(n, c, h * w)).reshape(n, cout, kh, kw, h, w)
    out = np.zeros((n, cout, ho, wo), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + s * (h - 1) + 1 : s, j : j + s * (w - 1) + 1 : s] += cols[:, :, i, j]
    del cols
    if bias is not None:
        out += bias.data[None, :, None, None]
    has_bias = bias is not None

    def backward_fn(g):
        gcols = np.empty((n, cout, kh, kw, h, w), dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                gcols[:, :, i, j] = g[:, :, i : i + s * (h - 1) + 1 : s, j : j + s * (w - 1) + 1 : s]
        gcols = gcols.reshape(n, cout * kh * kw, h * w)
        gx = gw = gb = None
        if x.requires_grad:
            gx = np.matmul(wmat, gcols).reshape(n, c, h, w)
        if weight.requires_grad:
            gw = _batched_outer(xd.reshape(n, c, h * w), gcols).reshape(spec.weight_shape)
        if has_bias and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw, gb) if has_bias else (gx, gw)

    parents = (x, weight, bias) if has_bias else (x, weight)
    return make_result(out, parents, backward_fn)


# ---------------------------------------------------------------------------
# pooling / activation / structure


class _BranchTape:
    """Branch choices of piecewise ops (relu signs, pool argmax) in call order.

    In record mode each op appends its choice; in replay mode each op takes
    the next stored choice instead of deciding from its input, which pins
    the network to one linear piece around the recorded point.
    """

    def __init__(self, replay=None):
        self.items = [] if replay is None else list(replay.items)
        self.replay = replay is not None
        self.pos = 0

    def choose(self, computed_fn):
        if self.replay:
            if self.pos >= len(self.items):
                raise RuntimeError("branch replay ran past the recorded ops")
            item = self.items[self.pos]
            self.pos += 1
            return item
        item = computed_fn()
        self.items.append(item)
        return item


_BRANCHES: Optional[_BranchTape] = None


@contextlib.contextmanager
def record_branches(replay: Optional[_BranchTape] = None):
    """Record branch choices of piecewise ops, or replay a previous recording."""
    global _BRANCHES
    previous = _BRANCHES
    _BRANCHES = _BranchTape(replay)
    try:
        yield _BRANCHES
    finally:
        _BRANCHES = previous


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 max pool, stride 2. Odd H/W are padded bottom/right with -inf.

    Ties route the gradient to the first maximal element in row-major
    window order.
    """
    if x.data.ndim != 4:
        raise ShapeError(f"maxpool2d expects NCHW input, got shape {x.shape}")
    n, c, h, w = x.shape
    xd = x.data
    ph, pw = h % 2, w % 2
    if ph or pw:
        xd = np.pad(xd, ((0, 0), (0, 0), (0, ph), (0, pw)), constant_values=-np.inf)
    hh, ww = xd.shape[2] // 2, xd.shape[3] // 2
    win = xd.reshape(n, c, hh, 2, ww, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, hh, ww, 4)
    if _BRANCHES is None:
        idx = np.argmax(win, axis=-1)
    else:
        idx = _BRANCHES.choose(lambda: np.argmax(win, axis=-1))
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    saved = _Saved(idx=idx.astype(np.uint8))

    def backward_fn(g):
        gwin = np.zeros((n, c, hh, ww, 4), dtype=g.dtype)
        np.put_along_axis(gwin, saved.idx[..., None].astype(np.intp), g[..., None], axis=-1)
        gx = gwin.reshape(n, c, hh, ww, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * hh, 2 * ww)
        return (gx[:, :, :h, :w],)

    return make_result(np.ascontiguousarray(out), (x,), backward_fn)


def relu(x: Tensor) -> Tensor:
    """max(x, 0); the subgradient at exactly 0 is 0."""
    if _BRANCHES is not None:
        mask = _BRANCHES.choose(lambda: x.data > 0)
        out = np.where(mask, x.data, 0).astype(x.data.dtype)

        def backward_fn(g):
            return (g * mask,)

        return make_result(out, (x,), backward_fn)
    out = np.maximum(x.data, 0)
    out_ref = out

    def backward_fn(g):
        return (g * (out_ref > 0),)

    return make_result(out, (x,), backward_fn)


def concat_channels(xs: Sequence[Tensor]) -> Tensor:
    if not xs:
        raise ShapeError("concat_channels needs at least one input")
    if len(xs) == 1:
        return xs[0]
    ref = xs[0].shape
    for t in xs:
        if t.data.ndim != 4 or t.shape[0] != ref[0] or t.shape[2:] != ref[2:]:
            raise ShapeError(f"concat_channels: shape {t.shape} incompatible with {ref}")
    bounds = np.cumsum([0] + [t.shape[1] for t in xs])
    out = np.concatenate([t.data for t in xs], axis=1)

    def backward_fn(g):
        return tuple(g[:, bounds[k] : bounds[k + 1]] for k in range(len(xs)))

    return make_result(out, tuple(xs), backward_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")

    def backward_fn(g):
        return (g, g)

    return make_result(a.data + b.data, (a, b), backward_fn)


def tsum(x: Tensor) -> Tensor:
    shape = x.shape

    def backward_fn(g):
        return (np.broadcast_to(g, shape).copy(),)

    return make_result(np.asarray(x.data.sum()), (x,), backward_fn)


def scale(x: Tensor, factor: float) -> Tensor:
    def backward_fn(g):
        return (g * factor,)

    return make_result(x.data * factor, (x,), backward_fn)


def add_n(xs: Sequence[Tensor]) -> Tensor:
    total = xs[0]
    for t in xs[1:]:
        total = add(total, t)
    return total


# ---------------------------------------------------------------------------
# loss


def log_softmax_map(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_ce_map(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean over pixels of -log softmax(logits)[label]; logits NCHW, labels NHW."""
    if logits.data.ndim != 4:
        raise ShapeError(f"softmax_ce_map expects NCHW logits, got {logits.shape}")
    n, c, h, w = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n, h, w):
        raise ShapeError(f"labels shape {labels.shape} != {(n, h, w)}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]")
    lsm = log_softmax_map(logits.data)
    lab = labels.astype(np.intp)[:, None]
    picked = np.take_along_axis(lsm, lab, axis=1)
    count = n * h * w
    loss = -picked.sum(dtype=np.float64) / count
    saved = _Saved(probs=np.exp(lsm), lab=lab)
    del lsm

    def backward_fn(g):
        grad = saved.probs.copy()
        np.put_along_axis(grad, saved.lab, np.take_along_axis(grad, saved.lab, axis=1) - 1, axis=1)
        grad *= np.asarray(g, dtype=grad.dtype) / count
        return (grad,)

    return make_result(np.asarray(loss, dtype=logits.dtype), (logits,), backward_fn)
