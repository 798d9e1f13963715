"""AdaDelta with a staircase-decayed learning-rate multiplier."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping

import numpy as np

from .tensor import Tensor


@dataclass
class AdaDeltaState:
    rho: float = 0.95
    epsilon: float = 1e-6
    lr_multiplier: float = 0.1
    decay_factor: float = 0.1
    decay_interval: int = 2000
    step: int = 0
    sq_grad: Dict[str, np.ndarray] = field(default_factory=dict)
    sq_delta: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr_multiplier <= 0:
            raise ValueError(f"lr_multiplier must be > 0, got {self.lr_multiplier}")
        if not 0 < self.decay_factor <= 1:
            raise ValueError(f"decay_factor must lie in (0, 1], got {self.decay_factor}")
        if self.decay_interval < 1:
            raise ValueError(f"decay_interval must be >= 1, got {self.decay_interval}")

    @property
    def current_lr(self) -> float:
        return self.lr_multiplier * self.decay_factor ** (self.step // self.decay_interval)


def adadelta_step(params: Mapping[str, Tensor], state: AdaDeltaState, grads: Mapping[str, np.ndarray] = None) -> None:
    """Apply one update in place.

    ``grads`` defaults to each parameter's ``.grad``; parameters without a
    gradient are treated as having a zero gradient.
    """
    rho, eps = state.rho, state.epsilon
    lr = state.current_lr
    for name, p in params.items():
        g = grads[name] if grads is not None else p.grad
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter {p.data.shape}")
        eg2 = state.sq_grad.get(name)
        if eg2 is None:
            eg2 = state.sq_grad[name] = np.zeros_like(p.data)
            state.sq_delta[name] = np.zeros_like(p.data)
        edx2 = state.sq_delta[name]
        eg2 *= rho
        eg2 += (1 - rho) * g * g
        delta = -np.sqrt(edx2 + eps) / np.sqrt(eg2 + eps) * g
        edx2 *= rho
        edx2 += (1 - rho) * delta * delta
        p.data += (lr * delta).astype(p.data.dtype, copy=False)
    state.step += 1


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
