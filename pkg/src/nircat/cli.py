"""Command-line entry point for corpus generation, training, evaluation and reports.

Exit codes: 0 success, 1 runtime/validation/I-O failure, 2 flag errors.
NIRCAT_OUT_DIR overrides the default output directory (and nothing else).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .augment import AugmentPolicy
from .classifier import BACKBONES, CataractClassifier
from .dataset import build_synthetic_corpus, load_manifest, save_png
from .experiments import export_history, run_ablation, run_pipeline
from .metrics import cls_eval, seg_error
from .postprocess import close, extract_roi
from .samples import T1_CODE, T2_CODE, T1_LABELS, T2_LABELS
from .segmenter import PyramidSegmenter


def _env_out_dir() -> str | None:
    return os.environ.get("NIRCAT_OUT_DIR")


def _parse_canvas(spec: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in spec.lower().split("x"))
        return h, w
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"canvas must be HxW, got {spec!r}") from exc


def _augment_policy(multiplier: int) -> AugmentPolicy | None:
    if multiplier == 0:
        return None
    return AugmentPolicy(multiplier=multiplier)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _merged(args: argparse.Namespace, config: dict, key: str, default):
    """Explicit flag > config file > default."""
    val = getattr(args, key.replace("-", "_"), None)
    if val is not None:
        return val
    if key in config:
        return config[key]
    return default


def _seg_arrays(samples, size: int):
    """Images resized bilinearly and masks nearest to the model resolution."""
    xs, ys = [], []
    for s in samples:
        img = s.image
        if img.shape != (size, size):
            with Image.fromarray(img, mode="L") as im:
                img = np.asarray(im.resize((size, size), Image.BILINEAR), dtype=np.uint8)
        xs.append(img)
        if s.mask is not None:
            m = s.mask
            if m.shape != (size, size):
                with Image.fromarray(m * 255, mode="L") as im:
                    m = (
                        np.asarray(im.resize((size, size), Image.NEAREST), dtype=np.uint8) >= 128
                    ).astype(np.uint8)
            ys.append(m)
        else:
            ys.append(None)
    return np.stack(xs), ys


def _roi_arrays(samples):
    """Classifier inputs: ROI from the closed ground-truth mask, plus label codes."""
    xs, ys = [], []
    for s in samples:
        if s.mask is None or s.label_t1 is None or s.label_t2 is None:
            raise ValueError(
                f"sample {s.sample_id!r} lacks mask or labels required for classification"
            )
        roi = extract_roi(s.image, close(s.mask)).roi
        xs.append(roi)
        ys.append([T1_CODE[s.label_t1], T2_CODE[s.label_t2]])
    return np.stack(xs), np.asarray(ys, dtype=np.int64)


# -- commands ----------------------------------------------------------------


def cmd_gen_data(args, parser) -> int:
    out = args.out or _env_out_dir()
    if out is None:
        parser.error("--out is required (or set NIRCAT_OUT_DIR)")
    manifest = build_synthetic_corpus(
        n_per_class=args.n_per_class,
        out_dir=Path(out),
        canvas=args.canvas,
        seed=args.seed,
        train_fraction=args.train_fraction,
    )
    total = 3 * args.n_per_class
    print(f"wrote {total} images ({args.n_per_class} per class) under {out}")
    print(f"manifest: {manifest}")
    return 0


def cmd_train_seg(args, parser) -> int:
    config = _load_config(args.config)
    train, test = load_manifest(Path(args.manifest))
    if not train or any(s.mask is None for s in train):
        raise ValueError("train split must be non-empty and fully mask-annotated")
    est = PyramidSegmenter(
        epochs=int(_merged(args, config, "epochs", 60)),
        lr=float(_merged(args, config, "lr", 1e-3)),
        batch_size=int(_merged(args, config, "batch_size", 4)),
        seed=int(_merged(args, config, "seed", 0)),
        structural_levels=args.structural_levels,
    )
    x_tr, y_tr = _seg_arrays(train, est.input_size)
    eval_set = None
    if test and all(s.mask is not None for s in test):
        x_te, y_te = _seg_arrays(test, est.input_size)
        eval_set = (x_te, np.stack(y_te))
    est.fit(
        x_tr,
        np.stack(y_tr),
        eval_set=eval_set,
        augment=_augment_policy(int(_merged(args, config, "augment_multiplier", 0))),
    )
    path = est.save(Path(args.out_ckpt))
    if args.history_out:
        export_history(est, Path(args.history_out), Path(args.history_out).with_suffix(".csv"))
    best = min(est.metric_history_) if est.metric_history_ else None
    print(f"checkpoint: {path}")
    print(f"final train loss: {est.loss_history_[-1]:.6f}")
    if best is not None:
        print(f"best test seg error: {best:.6f}")
    return 0


def cmd_eval_seg(args, parser) -> int:
    est = PyramidSegmenter.load(Path(args.ckpt))
    _, test = load_manifest(Path(args.manifest))
    if not test or any(s.mask is None for s in test):
        raise ValueError("test split must be non-empty and fully mask-annotated")
    x_te, y_te = _seg_arrays(test, est.input_size)
    preds = est.predict(x_te)
    result = seg_error(list(np.stack(y_te)), list(preds))
    print(f"segmentation error: {result.error:.6f} over {result.n} samples")
    if args.out_json:
        Path(args.out_json).write_text(json.dumps(result.to_json(), indent=1) + "\n")
        print(f"wrote {args.out_json}")
    return 0


def cmd_train_cls(args, parser) -> int:
    config = _load_config(args.config)
    train, test = load_manifest(Path(args.manifest))
    if not train:
        raise ValueError("train split is empty")
    x_tr, y_tr = _roi_arrays(train)
    eval_set = None
    if test:
        eval_set = _roi_arrays(test)
    est = CataractClassifier(
        backbone=args.backbone,
        epochs=int(_merged(args, config, "epochs", 100)),
        lr=float(_merged(args, config, "lr", 1e-5)),
        batch_size=int(_merged(args, config, "batch_size", 4)),
        loss_lambda=float(
            args.lambda_ if args.lambda_ is not None else config.get("lambda", 0.5)
        ),
        seed=int(_merged(args, config, "seed", 0)),
        pretrained_weights_path=args.pretrained_weights,
    )
    est.fit(
        x_tr,
        y_tr,
        eval_set=eval_set,
        augment=_augment_policy(int(_merged(args, config, "augment_multiplier", 0))),
    )
    path = est.save(Path(args.out_ckpt))
    if args.history_out:
        export_history(est, Path(args.history_out), Path(args.history_out).with_suffix(".csv"))
    print(f"checkpoint: {path}")
    if est.metric_history_:
        best = max(m["t2_accuracy"] for m in est.metric_history_)
        print(f"best test t2 accuracy: {best:.4f}")
    return 0


def cmd_eval_cls(args, parser) -> int:
    est = CataractClassifier.load(Path(args.ckpt))
    _, test = load_manifest(Path(args.manifest))
    if not test:
        raise ValueError("test split is empty")
    x_te, y_te = _roi_arrays(test)
    pred = est.predict(x_te)
    results = cls_eval(
        [T1_LABELS[c] for c in pred[:, 0]],
        [T1_LABELS[c] for c in y_te[:, 0]],
        [T2_LABELS[c] for c in pred[:, 1]],
        [T2_LABELS[c] for c in y_te[:, 1]],
    )
    for task, res in results.items():
        print(f"{task}: accuracy {res.accuracy:.4f}, macro F1 "
              f"{res.macro_f1 if res.macro_f1 is None else round(res.macro_f1, 4)}")
    if args.out_json:
        doc = {task: res.to_json() for task, res in results.items()}
        Path(args.out_json).write_text(json.dumps(doc, indent=1) + "\n")
        print(f"wrote {args.out_json}")
    return 0


def cmd_ablate(args, parser) -> int:
    train, test = load_manifest(Path(args.manifest))
    if not train or not test:
        raise ValueError("ablation needs both train and test splits")
    est = PyramidSegmenter()
    x_tr, y_tr = _seg_arrays(train, est.input_size)
    x_te, y_te = _seg_arrays(test, est.input_size)
    levels = [int(v) for v in args.levels.split(",")]
    rows = run_ablation(
        x_tr,
        np.stack(y_tr),
        x_te,
        np.stack(y_te),
        levels,
        seed=args.seed,
        epochs=args.epochs,
    )
    print("structural_levels  seg_error")
    for row in rows:
        print(f"{row['structural_levels']:>17d}  {row['seg_error']:.6f}")
    if args.out_json:
        slim = [
            {k: row[k] for k in ("structural_levels", "seg_error", "best_epoch")}
            for row in rows
        ]
        Path(args.out_json).write_text(json.dumps(slim, indent=1) + "\n")
        print(f"wrote {args.out_json}")
    return 0


def cmd_infer(args, parser) -> int:
    out_dir = args.out_dir or _env_out_dir() or "."
    result = run_pipeline(Path(args.image), Path(args.seg_ckpt), Path(args.cls_ckpt))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_png(result.mask * 255, out_dir / "mask.png")
    save_png(result.roi, out_dir / "roi.png")
    doc = {
        "p_unhealthy": result.output.p_t1,
        "dist_t2": {
            "pre_cataract": float(result.output.dist_t2[0]),
            "post_cataract": float(result.output.dist_t2[1]),
            "others": float(result.output.dist_t2[2]),
        },
        "empty_mask": result.empty_mask,
        "timings_sec": result.timings,
        "mask": str(out_dir / "mask.png"),
        "roi": str(out_dir / "roi.png"),
    }
    print(json.dumps(doc, indent=1))
    return 0


def cmd_report(args, parser) -> int:
    from .report import embedding_plot, load_histories, run_bar_chart, write_summary

    out_dir = Path(args.out_dir or _env_out_dir() or ".")
    histories = load_histories([Path(p) for p in args.history])
    chart = run_bar_chart(histories, out_dir / "runs.png")
    summary = write_summary(histories, out_dir / "summary.md")
    print(f"wrote {chart}")
    print(f"wrote {summary}")
    if args.cls_ckpt and args.manifest:
        est = CataractClassifier.load(Path(args.cls_ckpt))
        _, test = load_manifest(Path(args.manifest))
        x_te, y_te = _roi_arrays(test)
        feats = est.features(x_te)
        meta = embedding_plot(
            feats, y_te[:, 0], out_dir / "embedding.png", seed=args.seed
        )
        print(f"wrote {out_dir / 'embedding.png'} (silhouette {meta['silhouette_t1']:.3f})")
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nircat",
        description="NIR eye image segmentation and cataract screening toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a labeled synthetic corpus")
    p.add_argument("--n-per-class", type=int, required=True)
    p.add_argument("--out", help="output directory (default: NIRCAT_OUT_DIR)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--canvas", type=_parse_canvas, default=(240, 320), metavar="HxW")
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-seg", help="train the segmentation model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-ckpt", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--structural-levels", type=int, default=None)
    p.add_argument("--augment-multiplier", type=int, choices=(0, 5, 10))
    p.add_argument("--config", help="JSON training config (flags take precedence)")
    p.add_argument("--history-out", help="write loss/metric history JSON (+CSV)")
    p.set_defaults(func=cmd_train_seg)

    p = sub.add_parser("eval-seg", help="evaluate a segmentation checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-json")
    p.set_defaults(func=cmd_eval_seg)

    p = sub.add_parser("train-cls", help="train the multitask classifier")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-ckpt", required=True)
    p.add_argument("--backbone", choices=BACKBONES, default="small_scratch")
    p.add_argument("--pretrained-weights", help="local state dict for the backbone")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lambda", dest="lambda_", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--augment-multiplier", type=int, choices=(0, 5, 10))
    p.add_argument("--config")
    p.add_argument("--history-out")
    p.set_defaults(func=cmd_train_cls)

    p = sub.add_parser("eval-cls", help="evaluate a classifier checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-json")
    p.set_defaults(func=cmd_eval_cls)

    p = sub.add_parser("ablate", help="train per structural-level and tabulate errors")
    p.add_argument("--manifest", required=True)
    p.add_argument("--levels", default="2,5", help="comma-separated levels, e.g. 2,3,4,5")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-json")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("infer", help="run the full pipeline on one image")
    p.add_argument("--image", required=True)
    p.add_argument("--seg-ckpt", required=True)
    p.add_argument("--cls-ckpt", required=True)
    p.add_argument("--out-dir", help="default: NIRCAT_OUT_DIR or .")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("report", help="emit plots and a markdown summary")
    p.add_argument("--history", nargs="+", required=True)
    p.add_argument("--out-dir", help="default: NIRCAT_OUT_DIR or .")
    p.add_argument("--cls-ckpt", help="also emit a feature-embedding plot")
    p.add_argument("--manifest", help="test data for the embedding plot")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except Exception as exc:  # uniform runtime-failure contract
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
