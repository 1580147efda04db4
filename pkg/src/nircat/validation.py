"""Input validation shared by the estimators."""

from __future__ import annotations

import numpy as np
import torch


class NotFittedError(RuntimeError):
    pass


def check_fitted(estimator, attr: str = "net_") -> None:
    if getattr(estimator, attr, None) is None:
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted; call fit() or load a checkpoint"
        )


def as_image_batch(X, size: int | None = None) -> torch.Tensor:
    """Coerce images to a float32 (N, 1, H, W) tensor in [0, 1].

    Accepts (N, H, W) or (H, W); uint8 arrays are scaled by 1/255, float
    arrays must already be in [0, 1].
    """
    arr = X.detach().cpu().numpy() if torch.is_tensor(X) else np.asarray(X)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"expected (N, H, W) images, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float32) / 255.0
    else:
        arr = arr.astype(np.float32)
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("float images must be normalized to [0, 1]")
    if size is not None and arr.shape[-2:] != (size, size):
        raise ValueError(f"expected {size}x{size} images, got {arr.shape[-2:]}")
    return torch.from_numpy(arr).unsqueeze(1)


def as_mask_batch(y, size: int | None = None) -> torch.Tensor:
    """Coerce masks to a long (N, H, W) tensor with values in {0, 1}."""
    arr = y.detach().cpu().numpy() if torch.is_tensor(y) else np.asarray(y)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"expected (N, H, W) masks, got shape {arr.shape}")
    if not np.isin(np.unique(arr), (0, 1)).all():
        raise ValueError("masks must be binary (values in {0, 1})")
    if size is not None and arr.shape[-2:] != (size, size):
        raise ValueError(f"expected {size}x{size} masks, got {arr.shape[-2:]}")
    return torch.from_numpy(arr.astype(np.int64))


def as_label_array(y, n: int) -> np.ndarray:
    """Coerce multitask labels to an (N, 2) int array of (task-1, task-2) codes."""
    arr = np.asarray(y)
    if arr.shape != (n, 2):
        raise ValueError(f"expected labels of shape ({n}, 2), got {arr.shape}")
    arr = arr.astype(np.int64)
    if not np.isin(arr[:, 0], (0, 1)).all():
        raise ValueError("task-1 codes must be 0 (healthy) or 1 (unhealthy)")
    if not np.isin(arr[:, 1], (0, 1, 2)).all():
        raise ValueError("task-2 codes must be in {0, 1, 2}")
    return arr
