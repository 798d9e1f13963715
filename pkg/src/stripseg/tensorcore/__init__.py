"""Minimal tensor algebra with reverse-mode autodiff, AdaDelta and checks."""

from .checkpoint import CheckpointError, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from .gradcheck import GradCheckResult, check_gradients, numeric_gradient, relative_error
from .memory import MemoryMeter, active_meter, metered
from .ops import (
    LayerSpec,
    ShapeError,
    add,
    add_n,
    concat_channels,
    conv2d,
    conv_transpose2d,
    maxpool2d,
    relu,
    scale,
    softmax_ce_map,
    tsum,
)
from .optim import AdaDeltaState, adadelta_step, zero_grads
from .tensor import Tensor, backward

__all__ = [
    "AdaDeltaState",
    "CheckpointError",
    "GradCheckResult",
    "LayerSpec",
    "MemoryMeter",
    "ShapeError",
    "Tensor",
    "active_meter",
    "adadelta_step",
    "add",
    "add_n",
    "backward",
    "check_gradients",
    "concat_channels",
    "conv2d",
    "conv_transpose2d",
    "decode_checkpoint",
    "encode_checkpoint",
    "load_checkpoint",
    "maxpool2d",
    "metered",
    "numeric_gradient",
    "relative_error",
    "relu",
    "save_checkpoint",
    "scale",
    "softmax_ce_map",
    "tsum",
    "zero_grads",
]
