"""Evaluation: pixel-level segmentation error and classification metrics.

The segmentation error is the proportion of disagreeing pixels between
ground-truth and predicted masks,

    error = (1 / (N*m*n)) * sum XOR(gt, pred),

a normalized Hamming distance (symmetric, zero on identity, triangle
inequality).  Classification metrics report per-class precision/recall/F1
with macro averages; empty denominators are reported as None rather than
silently coerced to 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class EvalInputError(ValueError):
    """Inputs to an evaluation function are malformed."""


@dataclass
class SegEvalResult:
    error: float
    per_sample_errors: list[float]
    n: int
    m: int
    n_cols: int

    def to_json(self) -> dict:
        return {
            "error": self.error,
            "per_sample_errors": self.per_sample_errors,
            "n": self.n,
            "height": self.m,
            "width": self.n_cols,
        }


def seg_error(gt: list[np.ndarray], pred: list[np.ndarray]) -> SegEvalResult:
    """Mean per-pixel XOR disagreement over equally shaped binary mask pairs."""
    if len(gt) == 0 or len(pred) == 0:
        raise EvalInputError("mask lists must be non-empty")
    if len(gt) != len(pred):
        raise EvalInputError(f"list lengths differ: {len(gt)} vs {len(pred)}")
    shape = np.asarray(gt[0]).shape
    if len(shape) != 2:
        raise EvalInputError(f"masks must be 2-D, got shape {shape}")
    total = 0
    per_sample: list[float] = []
    pixels = shape[0] * shape[1]
    for g, p in zip(gt, pred):
        ga, pa = np.asarray(g), np.asarray(p)
        if ga.shape != shape or pa.shape != shape:
            raise EvalInputError("all masks must share one shape")
        for a in (ga, pa):
            if not np.isin(np.unique(a), (0, 1)).all():
                raise EvalInputError("masks must be binary")
        mism = int(np.count_nonzero(ga.astype(np.uint8) ^ pa.astype(np.uint8)))
        total += mism
        per_sample.append(mism / pixels)
    n = len(gt)
    return SegEvalResult(
        error=total / (n * pixels),
        per_sample_errors=per_sample,
        n=n,
        m=shape[0],
        n_cols=shape[1],
    )


@dataclass
class ClsEvalResult:
    accuracy: float
    classes: list[str]
    precision: dict[str, float | None]
    recall: dict[str, float | None]
    f1: dict[str, float | None]
    macro_precision: float | None
    macro_recall: float | None
    macro_f1: float | None
    confusion: np.ndarray  # rows = actual, cols = predicted
    confusion_normalized: np.ndarray = field(default=None)  # row-normalized

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "classes": self.classes,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "confusion": self.confusion.tolist(),
            "confusion_normalized": self.confusion_normalized.tolist(),
        }


def _macro(values: dict[str, float | None]) -> float | None:
    defined = [v for v in values.values() if v is not None]
    return float(np.mean(defined)) if defined else None


def eval_task(preds, labels, classes: list[str]) -> ClsEvalResult:
    """Accuracy, per-class and macro P/R/F1, and the confusion matrix for one task."""
    preds = list(preds)
    labels = list(labels)
    if len(preds) != len(labels):
        raise EvalInputError(f"length mismatch: {len(preds)} preds vs {len(labels)} labels")
    if len(preds) == 0:
        raise EvalInputError("empty prediction list")
    index = {c: i for i, c in enumerate(classes)}
    k = len(classes)
    conf = np.zeros((k, k), dtype=np.int64)
    for p, y in zip(preds, labels):
        if p not in index:
            raise EvalInputError(f"prediction outside class set: {p!r}")
        if y not in index:
            raise EvalInputError(f"label outside class set: {y!r}")
        conf[index[y], index[p]] += 1

    precision: dict[str, float | None] = {}
    recall: dict[str, float | None] = {}
    f1: dict[str, float | None] = {}
    for c, i in index.items():
        col = int(conf[:, i].sum())
        row = int(conf[i, :].sum())
        tp = int(conf[i, i])
        precision[c] = tp / col if col > 0 else None
        recall[c] = tp / row if row > 0 else None
        if precision[c] is None or recall[c] is None:
            f1[c] = None
        elif precision[c] + recall[c] == 0:
            f1[c] = 0.0
        else:
            f1[c] = 2 * precision[c] * recall[c] / (precision[c] + recall[c])

    row_sums = conf.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        norm = np.where(row_sums > 0, conf / np.maximum(row_sums, 1), 0.0)

    return ClsEvalResult(
        accuracy=float(np.trace(conf) / conf.sum()),
        classes=list(classes),
        precision=precision,
        recall=recall,
        f1=f1,
        macro_precision=_macro(precision),
        macro_recall=_macro(recall),
        macro_f1=_macro(f1),
        confusion=conf,
        confusion_normalized=norm,
    )


def cls_eval(
    preds_t1, labels_t1, preds_t2, labels_t2
) -> dict[str, ClsEvalResult]:
    """Evaluate both classification tasks; returns {'t1': ..., 't2': ...}."""
    from .samples import T1_LABELS, T2_LABELS

    return {
        "t1": eval_task(preds_t1, labels_t1, list(T1_LABELS)),
        "t2": eval_task(preds_t2, labels_t2, list(T2_LABELS)),
    }
