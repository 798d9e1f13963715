"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .ops import record_branches
from .tensor import Tensor, backward


@dataclass
class GradCheckResult:
    rel_errors: List[float]
    max_rel_error: float

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||); 0 when both vanish."""
    diff = np.linalg.norm((analytic - numeric).ravel())
    scale = max(np.linalg.norm(analytic.ravel()), np.linalg.norm(numeric.ravel()))
    if scale == 0:
        return 0.0
    return float(diff / scale)


def _central_differences(fn, t, step, positions, freeze):
    flat = t.data.reshape(-1)
    grad = np.zeros_like(flat)
    base = None
    if freeze:
        with record_branches() as base:
            fn()
    for k in positions:
        orig = flat[k]
        vals = []
        for delta in (step, -step):
            flat[k] = orig + delta
            with (record_branches(base) if freeze else contextlib.nullcontext()):
                vals.append(float(fn().data))
        flat[k] = orig
        grad[k] = (vals[0] - vals[1]) / (2 * step)
    return grad.reshape(t.shape)


def numeric_gradient(fn: Callable[[], Tensor], t: Tensor, step: float = 1e-3,
                     indices: Optional[Sequence[int]] = None) -> np.ndarray:
    positions = range(t.data.size) if indices is None else indices
    return _central_differences(fn, t, step, positions, False)


def check_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor], step: float = 1e-3,
                    max_probes: Optional[int] = None, seed: int = 0,
                    freeze_branches: bool = False) -> GradCheckResult:
    """Compare backward() of the scalar ``fn()`` with central differences.

    ``inputs`` must be float64 tensors with ``requires_grad`` set; ``fn`` must
    read them afresh on every call. With ``max_probes`` only a random subset
    of coordinates per input is differenced (and compared).

    With ``freeze_branches`` the perturbed evaluations replay the relu
    signs and pooling argmaxes of the unperturbed pass. A deep piecewise
    linear net has kinks within any finite step of most coordinates that
    touch many units; pinning the active piece differences the function
    whose derivative backward() is supposed to return at this point.
    """
    for t in inputs:
        if t.data.dtype != np.float64:
            raise TypeError("gradient checks run in double precision")
        t.grad = None
    loss = fn()
    backward(loss)
    rng = np.random.default_rng(seed)
    errors = []
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        idx = np.arange(t.data.size)
        if max_probes is not None and t.data.size > max_probes:
            idx = np.sort(rng.choice(t.data.size, size=max_probes, replace=False))
        numeric = _central_differences(fn, t, step, idx, freeze_branches)
        errors.append(relative_error(analytic.reshape(-1)[idx], numeric.reshape(-1)[idx]))
    return GradCheckResult(errors, max(errors) if errors else 0.0)
