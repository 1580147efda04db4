"""Core sample type shared by the data, training and evaluation layers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

T1_HEALTHY = "healthy"
T1_UNHEALTHY = "unhealthy"
T1_LABELS = (T1_HEALTHY, T1_UNHEALTHY)

T2_PRE = "pre_cataract"
T2_POST = "post_cataract"
T2_OTHERS = "others"
T2_LABELS = (T2_PRE, T2_POST, T2_OTHERS)

# integer codes used by the classifier (order matches the task-2 output vector)
T1_CODE = {T1_HEALTHY: 0, T1_UNHEALTHY: 1}
T2_CODE = {T2_PRE: 0, T2_POST: 1, T2_OTHERS: 2}


class LabelConsistencyError(ValueError):
    """Task-1/task-2 labels contradict each other."""


def check_label_pair(label_t1: str | None, label_t2: str | None) -> None:
    """Validate the cross-task label invariant.

    pre_cataract/post_cataract imply unhealthy; others implies healthy.
    """
    if label_t1 is not None and label_t1 not in T1_LABELS:
        raise LabelConsistencyError(f"unknown task-1 label: {label_t1!r}")
    if label_t2 is not None and label_t2 not in T2_LABELS:
        raise LabelConsistencyError(f"unknown task-2 label: {label_t2!r}")
    if label_t1 is None or label_t2 is None:
        return
    if label_t2 in (T2_PRE, T2_POST) and label_t1 != T1_UNHEALTHY:
        raise LabelConsistencyError(
            f"label_t2={label_t2!r} requires label_t1={T1_UNHEALTHY!r}, got {label_t1!r}"
        )
    if label_t2 == T2_OTHERS and label_t1 != T1_HEALTHY:
        raise LabelConsistencyError(
            f"label_t2={T2_OTHERS!r} requires label_t1={T1_HEALTHY!r}, got {label_t1!r}"
        )


@dataclass
class EyeSample:
    """One NIR eye image with optional ground truth.

    image: 2-D uint8 raster (H, W).
    mask: optional uint8 raster of the same shape with values in {0, 1};
        1 marks visible iris-or-pupil pixels.
    """

    image: np.ndarray
    mask: np.ndarray | None = None
    label_t1: str | None = None
    label_t2: str | None = None
    sample_id: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        img = np.asarray(self.image)
        if img.ndim != 2:
            raise ValueError(f"image must be 2-D, got shape {img.shape}")
        if img.dtype != np.uint8:
            raise ValueError(f"image must be uint8, got {img.dtype}")
        if self.mask is not None:
            m = np.asarray(self.mask)
            if m.shape != img.shape:
                raise ValueError(
                    f"mask shape {m.shape} does not match image shape {img.shape}"
                )
            vals = np.unique(m)
            if not np.isin(vals, (0, 1)).all():
                raise ValueError("mask must contain only values {0, 1}")
        check_label_pair(self.label_t1, self.label_t2)
