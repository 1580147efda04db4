"""Static report artifacts: run comparison charts, feature embeddings, summaries."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


class ReportError(RuntimeError):
    pass


def _best_metric(history: dict) -> tuple[str, float]:
    """(kind, value): lowest seg error or highest task-2 accuracy in a history."""
    metrics = history.get("metric_history") or []
    if not metrics:
        raise ReportError("history has no metric_history")
    if isinstance(metrics[0], dict):
        return "t2_accuracy", max(m["t2_accuracy"] for m in metrics)
    return "seg_error", min(metrics)


def load_histories(paths: list[Path]) -> list[tuple[str, dict]]:
    if not paths:
        raise ReportError("no history files given")
    out = []
    for p in paths:
        p = Path(p)
        try:
            out.append((p.stem, json.loads(p.read_text())))
        except (OSError, json.JSONDecodeError) as exc:
            raise ReportError(f"malformed history file {p}: {exc}") from exc
    return out


def run_bar_chart(histories: list[tuple[str, dict]], out_path: Path) -> Path:
    """One bar per run, grouped by metric kind (seg error vs accuracy)."""
    names, values, kinds = [], [], []
    for name, hist in histories:
        kind, value = _best_metric(hist)
        names.append(name)
        values.append(value)
        kinds.append(kind)
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(names)), 3.2))
    colors = ["tab:red" if k == "seg_error" else "tab:blue" for k in kinds]
    ax.bar(range(len(names)), values, color=colors)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("seg error / accuracy")
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def embedding_plot(
    features: np.ndarray,
    labels_t1,
    out_path: Path,
    seed: int = 0,
    perplexity: float = 20.0,
) -> dict:
    """2-D neighbor embedding of pooled classifier features, colored by task-1 label.

    Returns metadata including the silhouette score of the two label groups
    in the projection; the embedding parameters are recorded so the plot is
    reproducible.
    """
    from sklearn.manifold import TSNE
    from sklearn.metrics import silhouette_score

    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels_t1)
    perplexity = min(perplexity, max(2.0, (features.shape[0] - 1) / 3.0))
    emb = TSNE(
        n_components=2, random_state=seed, perplexity=perplexity, init="pca"
    ).fit_transform(features)
    sil = float(silhouette_score(emb, labels)) if len(np.unique(labels)) > 1 else float("nan")

    fig, ax = plt.subplots(figsize=(4.5, 4))
    for value, color in ((0, "tab:green"), (1, "tab:red")):
        sel = labels == value
        if sel.any():
            ax.scatter(emb[sel, 0], emb[sel, 1], s=12, c=color,
                       label="healthy" if value == 0 else "unhealthy")
    ax.legend(fontsize=8)
    ax.set_title("feature embedding (task 1)")
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)

    meta = {
        "method": "tsne",
        "seed": seed,
        "perplexity": perplexity,
        "silhouette_t1": sil,
        "n_points": int(features.shape[0]),
    }
    out_path.with_suffix(".json").write_text(json.dumps(meta, indent=1) + "\n")
    return meta


def write_summary(histories: list[tuple[str, dict]], out_path: Path) -> Path:
    lines = ["| run | metric | best value |", "| --- | --- | --- |"]
    for name, hist in histories:
        kind, value = _best_metric(hist)
        lines.append(f"| {name} | {kind} | {value:.6f} |")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text("\n".join(lines) + "\n")
    return out_path
