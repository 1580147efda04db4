"""Corpus building and manifest I/O.

A dataset on disk is a directory of grayscale PNGs plus a JSON manifest:

    {"root": ".", "entries": [
        {"image": "images/x.png", "mask": "masks/x.png",
         "label_t1": "healthy", "label_t2": "others", "split": "train"},
        ...]}

Masks are stored as 0/255 single-channel PNGs and binarized at 128 on load.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .eyegen import CONDITIONS, EyeGenParams, generate_eye
from .samples import EyeSample, check_label_pair

SPLITS = ("train", "test")


class ManifestError(ValueError):
    """Manifest is malformed or references missing files."""


@dataclass
class ManifestEntry:
    image: str
    mask: str | None = None
    label_t1: str | None = None
    label_t2: str | None = None
    split: str = "train"

    def to_json(self) -> dict:
        d = {"image": self.image, "split": self.split}
        if self.mask is not None:
            d["mask"] = self.mask
        if self.label_t1 is not None:
            d["label_t1"] = self.label_t1
        if self.label_t2 is not None:
            d["label_t2"] = self.label_t2
        return d


@dataclass
class DatasetManifest:
    root: Path
    entries: list[ManifestEntry] = field(default_factory=list)

    def save(self, path: Path) -> Path:
        path = Path(path)
        rel_root = "." if self.root == path.parent else str(self.root)
        doc = {"root": rel_root, "entries": [e.to_json() for e in self.entries]}
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path: Path) -> "DatasetManifest":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
        root = Path(doc.get("root", "."))
        if not root.is_absolute():
            root = path.parent / root
        entries = []
        for raw in doc.get("entries", []):
            if "image" not in raw:
                raise ManifestError(f"manifest entry without image path in {path}")
            split = raw.get("split", "train")
            if split not in SPLITS:
                raise ManifestError(f"unknown split {split!r} in {path}")
            entries.append(
                ManifestEntry(
                    image=raw["image"],
                    mask=raw.get("mask"),
                    label_t1=raw.get("label_t1"),
                    label_t2=raw.get("label_t2"),
                    split=split,
                )
            )
        return cls(root=root, entries=entries)


def _read_gray(path: Path) -> np.ndarray:
    if not path.exists():
        raise ManifestError(f"referenced file does not exist: {path}")
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def save_png(array: np.ndarray, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array.astype(np.uint8), mode="L").save(path)


def load_manifest(path: Path) -> tuple[list[EyeSample], list[EyeSample]]:
    """Load a manifest and decode all rasters, partitioned into (train, test).

    Stored 8-bit masks binarize at threshold 128.  Contradictory task labels
    raise LabelConsistencyError.
    """
    manifest = DatasetManifest.load(path)
    train: list[EyeSample] = []
    test: list[EyeSample] = []
    for entry in manifest.entries:
        image = _read_gray(manifest.root / entry.image)
        mask = None
        if entry.mask is not None:
            mask = (_read_gray(manifest.root / entry.mask) >= 128).astype(np.uint8)
        check_label_pair(entry.label_t1, entry.label_t2)
        sample = EyeSample(
            image=image,
            mask=mask,
            label_t1=entry.label_t1,
            label_t2=entry.label_t2,
            sample_id=entry.image,
        )
        (train if entry.split == "train" else test).append(sample)
    return train, test


def _sample_params(
    rng: np.random.Generator, condition: str, canvas: tuple[int, int], seed: int
) -> EyeGenParams:
    """Draw per-sample generation covariates (radii, droop, speculars, dilation)."""
    h, w = canvas
    r_max = min(h, w)
    return EyeGenParams(
        canvas=canvas,
        pupil_radius_fraction=float(rng.uniform(0.25, 0.55)),
        iris_radius_px=int(rng.integers(int(0.24 * r_max), int(0.36 * r_max))),
        condition=condition,
        eyelid_droop=float(rng.choice([0.0, rng.uniform(0.1, 0.8)], p=[0.3, 0.7])),
        specular_count=int(rng.integers(0, 4)),
        dilation_level=float(rng.uniform(0.0, 1.0)),
        rng_seed=seed,
    )


def build_synthetic_corpus(
    n_per_class: int,
    out_dir: Path,
    canvas: tuple[int, int] = (240, 320),
    seed: int = 0,
    train_fraction: float = 0.8,
) -> Path:
    """Write a labeled synthetic corpus and its manifest; returns the manifest path.

    Produces ``n_per_class`` samples for each condition with ground-truth
    masks, split per class into train/test by ``train_fraction``.
    Deterministic: the same arguments produce byte-identical manifests.
    """
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be >= 1, got {n_per_class}")
    out_dir = Path(out_dir)
    try:
        (out_dir / "images").mkdir(parents=True, exist_ok=True)
        (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create corpus directory {out_dir}: {exc}") from exc

    master = np.random.default_rng(seed)
    n_train = int(round(n_per_class * train_fraction))
    entries: list[ManifestEntry] = []
    for condition in CONDITIONS:
        for i in range(n_per_class):
            sample_seed = int(master.integers(0, 2**63 - 1))
            params = _sample_params(master, condition, canvas, sample_seed)
            sample = generate_eye(params)
            name = f"{condition}_{i:04d}.png"
            save_png(sample.image, out_dir / "images" / name)
            save_png(sample.mask * 255, out_dir / "masks" / name)
            entries.append(
                ManifestEntry(
                    image=f"images/{name}",
                    mask=f"masks/{name}",
                    label_t1=sample.label_t1,
                    label_t2=sample.label_t2,
                    split="train" if i < n_train else "test",
                )
            )
    manifest = DatasetManifest(root=out_dir, entries=entries)
    return manifest.save(out_dir / "manifest.json")
