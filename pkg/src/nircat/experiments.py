"""Experiment drivers: level ablation, end-to-end pipeline, history export."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .classifier import CataractClassifier, MultitaskOutput
from .postprocess import close, extract_roi
from .segmenter import PyramidSegmenter


def run_ablation(
    X_train,
    y_train,
    X_test,
    y_test,
    levels,
    seed: int = 0,
    **segmenter_params,
) -> list[dict]:
    """Train one segmenter per structural-level setting; identical seeds/epochs.

    Returns one row per level: {"structural_levels", "seg_error", "best_epoch",
    "loss_history", "metric_history"}.
    """
    n_blocks = segmenter_params.get("n_blocks", 5)
    levels = list(levels)
    for lv in levels:
        if not 2 <= lv <= n_blocks:
            raise ValueError(f"structural level {lv} outside [2, {n_blocks}]")
    rows = []
    for lv in levels:
        est = PyramidSegmenter(structural_levels=lv, seed=seed, **segmenter_params)
        est.fit(X_train, y_train, eval_set=(X_test, y_test))
        err = min(est.metric_history_)
        rows.append(
            {
                "structural_levels": lv,
                "seg_error": err,
                "best_epoch": est.best_epoch_,
                "loss_history": est.loss_history_,
                "metric_history": est.metric_history_,
            }
        )
    return rows


@dataclass
class PipelineResult:
    mask: np.ndarray  # binary mask at the input image's native resolution
    roi: np.ndarray  # 224x224 uint8
    output: MultitaskOutput
    empty_mask: bool
    timings: dict[str, float]


class PipelineError(RuntimeError):
    pass


def _load_image(path: Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise PipelineError(f"image does not exist: {path}")
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L"), dtype=np.uint8)
    except Exception as exc:
        raise PipelineError(f"cannot read image {path}: {exc}") from exc


def run_pipeline(
    image_path: Path,
    seg_ckpt: Path,
    cls_ckpt: Path,
) -> PipelineResult:
    """segment -> close -> extract ROI -> classify, with per-stage wall-clock."""
    try:
        seg = PyramidSegmenter.load(seg_ckpt)
        cls = CataractClassifier.load(cls_ckpt)
    except Exception as exc:
        raise PipelineError(f"cannot load checkpoints: {exc}") from exc
    image = _load_image(image_path)
    return run_pipeline_loaded(image, seg, cls)


def run_pipeline_loaded(
    image: np.ndarray, seg: PyramidSegmenter, cls: CataractClassifier
) -> PipelineResult:
    h, w = image.shape
    size = seg.input_size

    t0 = time.perf_counter()
    if (h, w) != (size, size):
        with Image.fromarray(image, mode="L") as im:
            seg_input = np.asarray(im.resize((size, size), Image.BILINEAR), dtype=np.uint8)
    else:
        seg_input = image
    pred = seg.predict_mask(seg_input)
    t1 = time.perf_counter()

    refined = close(pred.mask)
    if (h, w) != (size, size):
        with Image.fromarray(refined * 255, mode="L") as im:
            mask_native = (
                np.asarray(im.resize((w, h), Image.NEAREST), dtype=np.uint8) >= 128
            ).astype(np.uint8)
    else:
        mask_native = refined
    roi_result = extract_roi(image, mask_native)
    t2 = time.perf_counter()

    output = cls.predict_output(roi_result.roi)
    t3 = time.perf_counter()

    timings = {
        "segment": t1 - t0,
        "postprocess": t2 - t1,
        "classify": t3 - t2,
        "total": t3 - t0,
    }
    return PipelineResult(
        mask=mask_native,
        roi=roi_result.roi,
        output=output,
        empty_mask=roi_result.empty_mask,
        timings=timings,
    )


def export_history(estimator, json_path: Path, csv_path: Path | None = None) -> Path:
    """Write loss/metric history as JSON (and optionally CSV)."""
    json_path = Path(json_path)
    doc = {
        "loss_history": getattr(estimator, "loss_history_", []),
        "metric_history": getattr(estimator, "metric_history_", []),
        "best_epoch": getattr(estimator, "best_epoch_", None),
        "params": estimator.get_params(),
    }
    json_path.parent.mkdir(parents=True, exist_ok=True)
    json_path.write_text(json.dumps(doc, indent=1, sort_keys=True, default=str) + "\n")
    if csv_path is not None:
        csv_path = Path(csv_path)
        with csv_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "metric"])
            metrics = doc["metric_history"]
            for i, loss in enumerate(doc["loss_history"]):
                metric = metrics[i] if i < len(metrics) else ""
                writer.writerow([i, loss, json.dumps(metric) if metric != "" else ""])
    return json_path
