"""Tensor with a reverse-mode gradient tape."""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .memory import active_meter

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """An n-dimensional real array (order <= 4) that may carry a gradient.

    Tensors produced by ops on inputs that require gradients remember their
    parents and a backward closure; :func:`backward` walks that record.
    Closures capture arrays, never the output tensor, so a graph is freed
    by reference counting as soon as the caller drops it.
    """

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        if arr.ndim > 4:
            raise ValueError(f"tensor order {arr.ndim} exceeds 4 (shape {arr.shape})")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: tuple = ()
        self._backward: Optional[BackwardFn] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def sum(self) -> "Tensor":
        from .ops import tsum

        return tsum(self)

    def __add__(self, other: "Tensor") -> "Tensor":
        from .ops import add

        return add(self, other)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"


def make_result(
    data: np.ndarray,
    parents: Sequence[Tensor],
    backward_fn: Optional[BackwardFn],
) -> Tensor:
    """Wrap an op output; record the tape entry only if some parent needs it."""
    out = Tensor(data)
    meter = active_meter()
    if meter is not None:
        meter.track(out, out.data.nbytes)
    if backward_fn is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _topological_order(root: Tensor) -> list:
    order: list = []
    seen: set = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, grad: Optional[np.ndarray] = None) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf requiring grad.

    The tape is consumed: each node drops its closure and parent links once
    its gradient has been propagated, so saved activations are released
    progressively during the sweep.
    """
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any tensor requiring grad")
    if grad is None:
        if loss.data.size != 1:
            raise ValueError(f"backward needs an explicit grad for shape {loss.shape}")
        grad = np.ones_like(loss.data)
    meter = active_meter()
    order = _topological_order(loss)
    grads: dict = {id(loss): grad}
    counted: dict = {}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if meter is not None and id(node) in counted:
            meter.free(counted.pop(id(node)))
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        parent_grads = node._backward(g)
        parents = node._parents
        node._backward = None
        node._parents = ()
        del g
        for parent, pg in zip(parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
                if meter is not None and not parent.is_leaf:
                    counted[key] = pg.nbytes
                    meter.alloc(pg.nbytes)
