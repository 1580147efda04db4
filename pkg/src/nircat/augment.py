"""Contrast / flip augmentation with fixed dataset-size multipliers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .samples import EyeSample

DEFAULT_CONTRAST_FACTORS = (0.6, 0.8, 1.0, 1.2, 1.4)

FLIP_NONE = "none"
FLIP_HORIZONTAL = "horizontal"


@dataclass
class AugmentPolicy:
    """Augmentation recipe.

    multiplier=10 expands a sample into {original, flipped} x the five
    contrast factors.  multiplier=5 expands into original + flipped +
    the three non-identity factors {0.6, 0.8, 1.2} on the original.
    """

    contrast_factors: tuple[float, ...] = DEFAULT_CONTRAST_FACTORS
    flips: str = FLIP_HORIZONTAL
    multiplier: int = 10

    def validate(self) -> None:
        if self.multiplier not in (5, 10):
            raise ValueError(f"multiplier must be 5 or 10, got {self.multiplier}")
        if len(self.contrast_factors) != 5:
            raise ValueError(
                f"exactly 5 contrast factors required, got {len(self.contrast_factors)}"
            )
        if any(f <= 0 for f in self.contrast_factors):
            raise ValueError("contrast factors must be positive")
        if self.flips not in (FLIP_NONE, FLIP_HORIZONTAL):
            raise ValueError(f"unknown flips mode: {self.flips!r}")
        if self.multiplier == 10 and self.flips != FLIP_HORIZONTAL:
            raise ValueError("multiplier=10 requires horizontal flips")


def adjust_contrast(image: np.ndarray, factor: float) -> np.ndarray:
    """Scale contrast about the image mean: clamp(mean + factor*(x - mean))."""
    x = image.astype(np.float64)
    mean = x.mean()
    out = mean + factor * (x - mean)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _variant(sample: EyeSample, flip: bool, factor: float, tag: str) -> EyeSample:
    img = sample.image[:, ::-1] if flip else sample.image
    img = adjust_contrast(img, factor)
    mask = None
    if sample.mask is not None:
        mask = sample.mask[:, ::-1].copy() if flip else sample.mask.copy()
    return EyeSample(
        image=img,
        mask=mask,
        label_t1=sample.label_t1,
        label_t2=sample.label_t2,
        sample_id=f"{sample.sample_id}:{tag}",
        meta=dict(sample.meta),
    )


def augment(sample: EyeSample, policy: AugmentPolicy) -> list[EyeSample]:
    """Expand one sample into exactly ``policy.multiplier`` samples.

    Masks follow the geometric transform only; contrast never touches them.
    Labels are copied unchanged.
    """
    policy.validate()
    out: list[EyeSample] = []
    if policy.multiplier == 10:
        for flip in (False, True):
            for f in policy.contrast_factors:
                tag = f"{'flip' if flip else 'orig'}-c{f:g}"
                out.append(_variant(sample, flip, f, tag))
    else:
        out.append(_variant(sample, False, 1.0, "orig"))
        if policy.flips == FLIP_HORIZONTAL:
            out.append(_variant(sample, True, 1.0, "flip"))
            extra = [f for f in policy.contrast_factors if f != 1.0][:3]
        else:
            extra = [f for f in policy.contrast_factors if f != 1.0][:4]
        for f in extra:
            out.append(_variant(sample, False, f, f"orig-c{f:g}"))
    if len(out) != policy.multiplier:
        raise ValueError(
            f"policy produced {len(out)} samples, expected {policy.multiplier}; "
            "check contrast_factors for duplicates of 1.0"
        )
    return out


def augment_all(samples: list[EyeSample], policy: AugmentPolicy) -> list[EyeSample]:
    out: list[EyeSample] = []
    for s in samples:
        out.extend(augment(s, policy))
    return out
