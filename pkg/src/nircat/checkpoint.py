"""Checkpoint persistence: torch weights blob + human-readable JSON sidecar."""

from __future__ import annotations

import json
from pathlib import Path

import torch


class CheckpointError(RuntimeError):
    pass


def sidecar_path(path: Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_checkpoint(
    path: Path,
    estimator_name: str,
    params: dict,
    state_dict: dict,
    epoch: int,
    train_loss: float | None,
    loss_history: list,
    metric_history: list,
    rng_seed: int,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {"estimator": estimator_name, "params": params, "state_dict": state_dict},
        path,
    )
    sidecar = {
        "estimator": estimator_name,
        "config": params,
        "epoch": epoch,
        "train_loss": train_loss,
        "loss_history": loss_history,
        "metric_history": metric_history,
        "rng_seed": rng_seed,
    }
    sidecar_path(path).write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n")
    return path


def load_checkpoint(path: Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint does not exist: {path}")
    try:
        blob = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    for key in ("estimator", "params", "state_dict"):
        if key not in blob:
            raise CheckpointError(f"checkpoint {path} missing field {key!r}")
    sc = sidecar_path(path)
    blob["sidecar"] = json.loads(sc.read_text()) if sc.exists() else {}
    return blob
