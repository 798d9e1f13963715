"""Page canvas preprocessing, strip planning and strip-scheduled run loops."""

from .canvas import PageCanvas, ScaleRecord, preprocess, resize_bilinear, resize_nearest
from .geometry import (
    DESK_STRIPS,
    PAPER_STRIPS,
    GeometryError,
    Strip,
    StripConfig,
    StripPlan,
    nearest_valid_h,
    noprior_config,
    plan_strips,
)
from .runner import (
    TEACHER_LOGIT,
    HierMask,
    StepRecord,
    StripTrace,
    infer_page,
    infer_pages,
    teacher_logits,
    train_page,
    train_pages,
)
from .training import LogRow, TrainConfig, Trainer, read_loss_csv

__all__ = [
    "DESK_STRIPS",
    "PAPER_STRIPS",
    "TEACHER_LOGIT",
    "GeometryError",
    "HierMask",
    "LogRow",
    "PageCanvas",
    "ScaleRecord",
    "StepRecord",
    "Strip",
    "StripConfig",
    "StripPlan",
    "StripTrace",
    "TrainConfig",
    "Trainer",
    "infer_page",
    "infer_pages",
    "nearest_valid_h",
    "noprior_config",
    "plan_strips",
    "preprocess",
    "read_loss_csv",
    "resize_bilinear",
    "resize_nearest",
    "teacher_logits",
    "train_page",
    "train_pages",
]
