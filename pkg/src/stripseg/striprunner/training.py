"""Training loop over a fixed set of pages."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..segnet import SegNet
from ..tensorcore import AdaDeltaState
from .geometry import StripConfig
from .runner import StepRecord, train_pages


@dataclass
class TrainConfig:
    batch_size: int = 4
    steps: int = 2000
    seed: int = 0
    teacher_prior: bool = False
    rho: float = 0.95
    epsilon: float = 1e-6
    lr_multiplier: float = 0.1
    decay_factor: float = 0.1
    decay_interval: int = 2000
    checkpoint_every: int = 0

    def __post_init__(self):
        for name in ("batch_size", "steps", "decay_interval"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")

    def optimizer(self) -> AdaDeltaState:
        return AdaDeltaState(rho=self.rho, epsilon=self.epsilon, lr_multiplier=self.lr_multiplier,
                             decay_factor=self.decay_factor, decay_interval=self.decay_interval)

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class LogRow:
    step: int
    epoch: int
    strip: int
    loss: float
    level_losses: List[float]
    lr: float


class Trainer:
    """Cycles shuffled page batches; each strip of a batch is one optimizer step."""

    def __init__(self, net: SegNet, pixels: np.ndarray, gt: Sequence[np.ndarray], strips: StripConfig,
                 tcfg: TrainConfig):
        self.net = net
        self.pixels = np.asarray(pixels, dtype=np.float32)
        if self.pixels.ndim != 3:
            raise ValueError(f"pages must be (N, h, w), got {self.pixels.shape}")
        self.gt = [np.asarray(g) for g in gt]
        self.strips = strips
        self.tcfg = tcfg
        self.state = tcfg.optimizer()
        self.rng = np.random.default_rng(tcfg.seed)
        self.log: List[LogRow] = []
        self._epoch = 0
        self._queue: List[int] = []

    @property
    def step(self) -> int:
        return self.state.step

    def _next_batch(self) -> np.ndarray:
        n = len(self.pixels)
        bs = min(self.tcfg.batch_size, n)
        if len(self._queue) < bs:
            self._queue.extend(self.rng.permutation(n).tolist())
            self._epoch += 1
        idx, self._queue = self._queue[:bs], self._queue[bs:]
        return np.array(sorted(idx))

    def run(self, steps: Optional[int] = None,
            callback: Optional[Callable[["Trainer", LogRow], bool]] = None) -> List[LogRow]:
        """Train for ``steps`` optimizer steps (default: the config's).

        ``callback`` is called after every step; returning True stops early.
        """
        target = self.step + (self.tcfg.steps if steps is None else steps)
        stop = False
        while self.step < target and not stop:
            idx = self._next_batch()
            remaining = target - self.step
            gt = [g[idx] for g in self.gt]

            def on_step(rec: StepRecord):
                nonlocal stop
                row = LogRow(self.step, self._epoch, rec.strip, rec.loss, rec.level_losses, rec.lr)
                self.log.append(row)
                if callback is not None and callback(self, row):
                    stop = True

            train_pages(self.net, self.pixels[idx], gt, self.strips, self.state,
                        teacher_prior=self.tcfg.teacher_prior, max_steps=remaining, on_step=on_step,
                        should_stop=lambda: stop)
        return self.log

    def write_csv(self, path) -> None:
        levels = self.net.schema.num_levels
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "loss"] + [f"loss_L{i + 1}" for i in range(levels)] + ["lr"])
            for r in self.log:
                w.writerow([r.step, f"{r.loss:.6f}"] + [f"{v:.6f}" for v in r.level_losses] + [f"{r.lr:g}"])


def read_loss_csv(path) -> Dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}
