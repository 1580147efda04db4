"""Training losses: per-pixel mask cross-entropy and the two-task joint loss."""

from __future__ import annotations

from dataclasses import dataclass

import torch

EPS = 1e-7


@dataclass
class LossWeights:
    """Weight of the binary-task term in the joint classification loss."""

    lam: float = 0.5

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")


def seg_loss(prob: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Mean two-class cross-entropy over pixels.

    prob: (..., 2, H, W) per-pixel probabilities with channel 0 = foreground.
    gt: (..., H, W) binary mask.  Zero iff the prediction is one-hot correct
    everywhere (probabilities are floored at EPS, never capped).
    """
    if prob.shape[-3] != 2:
        raise ValueError(f"prob must have 2 channels, got {prob.shape}")
    if prob.shape[:-3] + prob.shape[-2:] != gt.shape:
        raise ValueError(f"shape mismatch: prob {tuple(prob.shape)} vs gt {tuple(gt.shape)}")
    uniq = torch.unique(gt)
    if not bool(((uniq == 0) | (uniq == 1)).all()):
        raise ValueError("ground-truth mask must be binary")
    gt = gt.to(dtype=torch.long)
    fg, bg = prob.unbind(dim=-3)
    p_true = torch.where(gt == 1, fg, bg)
    return -torch.log(p_true.clamp(min=EPS)).mean()


def bce(p: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Binary cross-entropy on probabilities, clamped to [EPS, 1-EPS]."""
    p = torch.as_tensor(p, dtype=torch.get_default_dtype() if not torch.is_tensor(p) else p.dtype)
    y = torch.as_tensor(y, dtype=p.dtype)
    p = p.clamp(min=EPS, max=1.0 - EPS)
    return (-(y * torch.log(p) + (1.0 - y) * torch.log(1.0 - p))).mean()


def cce(dist: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """One-hot categorical cross-entropy -log(dist[y]) on probability vectors.

    dist: (..., K) distributions; y: (...,) integer class indices.
    """
    dist = torch.as_tensor(dist)
    y = torch.as_tensor(y, dtype=torch.long)
    picked = dist.gather(-1, y.unsqueeze(-1)).squeeze(-1)
    return -torch.log(picked.clamp(min=EPS)).mean()


def total_loss(
    p: torch.Tensor,
    y1: torch.Tensor,
    dist: torch.Tensor,
    y2: torch.Tensor,
    weights: LossWeights = LossWeights(),
) -> torch.Tensor:
    """Joint classification loss: lambda * BCE(task 1) + CCE(task 2)."""
    return weights.lam * bce(p, y1) + cce(dist, y2)
