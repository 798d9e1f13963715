"""Allocator accounting for graph activations.

A :class:`MemoryMeter` counts the bytes held by non-leaf tensors (op
outputs plus any arrays an op saves for its backward pass) and by the
intermediate gradients created during ``backward``. Parameters, their
gradients and optimizer state are not activations and are never counted.
"""

from __future__ import annotations

import contextlib
import weakref
from typing import Iterator, Optional

_ACTIVE: Optional["MemoryMeter"] = None


class MemoryMeter:
    def __init__(self) -> None:
        self.live = 0
        self.peak = 0
        self.allocations = 0

    def alloc(self, nbytes: int) -> None:
        self.live += int(nbytes)
        self.allocations += 1
        if self.live > self.peak:
            self.peak = self.live

    def free(self, nbytes: int) -> None:
        self.live -= int(nbytes)

    def track(self, obj: object, nbytes: int) -> None:
        """Count ``nbytes`` until ``obj`` is garbage collected."""
        self.alloc(nbytes)
        weakref.finalize(obj, self.free, nbytes)

    def reset_peak(self) -> None:
        self.peak = self.live


def active_meter() -> Optional[MemoryMeter]:
    return _ACTIVE


@contextlib.contextmanager
def metered(meter: Optional[MemoryMeter] = None) -> Iterator[MemoryMeter]:
    """Install ``meter`` (or a fresh one) for the duration of the block."""
    global _ACTIVE
    meter = meter if meter is not None else MemoryMeter()
    previous = _ACTIVE
    _ACTIVE = meter
    try:
        yield meter
    finally:
        _ACTIVE = previous
