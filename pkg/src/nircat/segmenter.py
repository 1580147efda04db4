"""Estimator wrapping the pyramid-fusion segmentation network."""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from sklearn.base import BaseEstimator

from . import checkpoint as ckpt
from .augment import AugmentPolicy, augment_all
from .losses import seg_loss
from .metrics import seg_error
from .pyramid import PyramidConfig, PyramidFusionNet
from .samples import EyeSample
from .validation import as_image_batch, as_mask_batch, check_fitted


@dataclass
class MaskPrediction:
    """Per-pixel class probabilities and the binary mask derived from them.

    prob: (2, H, W) float32, channel 0 = iris-or-pupil, channel 1 = background.
    mask: (H, W) uint8; ties break toward foreground.
    """

    prob: np.ndarray
    mask: np.ndarray


class PyramidSegmenter(BaseEstimator):
    """Two-class iris/pupil segmenter with a scikit-learn style interface.

    fit(X, y) trains on (N, H, W) images and binary masks; an optional
    eval_set=(X_test, y_test) drives per-epoch test error tracking and
    best-checkpoint selection.  predict returns binary masks, predict_proba
    per-pixel probabilities.
    """

    def __init__(
        self,
        n_blocks: int = 5,
        layers_per_block=None,
        growth_rate=None,
        init_channels: int = 12,
        bottleneck_mult: int = 3,
        compression: float = 0.5,
        input_size: int = 224,
        structural_levels=None,
        epochs: int = 60,
        lr: float = 1e-3,
        batch_size: int = 4,
        seed: int = 0,
    ):
        self.n_blocks = n_blocks
        self.layers_per_block = layers_per_block
        self.growth_rate = growth_rate
        self.init_channels = init_channels
        self.bottleneck_mult = bottleneck_mult
        self.compression = compression
        self.input_size = input_size
        self.structural_levels = structural_levels
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.seed = seed
        self.net_ = None

    # -- construction ------------------------------------------------------

    def build_config(self) -> PyramidConfig:
        return PyramidConfig(
            n_blocks=self.n_blocks,
            layers_per_block=(
                tuple(self.layers_per_block) if self.layers_per_block is not None else None
            ),
            growth_rate=(
                tuple(self.growth_rate)
                if isinstance(self.growth_rate, (list, tuple))
                else self.growth_rate
            ),
            init_channels=self.init_channels,
            bottleneck_mult=self.bottleneck_mult,
            compression=self.compression,
            input_size=self.input_size,
            structural_levels=self.structural_levels,
        )

    def build_net(self) -> PyramidFusionNet:
        """Construct the (seeded) network without training it."""
        if self.epochs < 1 or self.lr <= 0 or self.batch_size < 1:
            raise ValueError("epochs >= 1, lr > 0 and batch_size >= 1 required")
        torch.manual_seed(self.seed)
        return PyramidFusionNet(self.build_config())

    # -- training ----------------------------------------------------------

    def fit(self, X, y, eval_set=None, augment: AugmentPolicy | None = None):
        net = self.build_net()
        size = self.input_size

        if augment is not None:
            X, y = self._augmented_arrays(X, y, augment)
        xb = as_image_batch(X, size)
        yb = as_mask_batch(y, size)
        if xb.shape[0] != yb.shape[0]:
            raise ValueError(f"{xb.shape[0]} images vs {yb.shape[0]} masks")
        if eval_set is not None:
            x_ev = as_image_batch(eval_set[0], size)
            y_ev = np.asarray(eval_set[1])
            as_mask_batch(y_ev, size)  # validate

        n = xb.shape[0]
        self.effective_train_size_ = n
        rng = np.random.default_rng(self.seed)
        opt = torch.optim.Adam(net.parameters(), lr=self.lr, betas=(0.9, 0.999), eps=1e-8)

        loss_history: list[float] = []
        metric_history: list[float] = []
        best_err = np.inf
        best_state = None
        best_epoch = 0
        for epoch in range(self.epochs):
            net.train()
            perm = rng.permutation(n)
            epoch_loss = 0.0
            for start in range(0, n, self.batch_size):
                idx = perm[start : start + self.batch_size]
                logits = net(xb[idx])
                prob = torch.softmax(logits, dim=1)
                loss = seg_loss(prob, yb[idx])
                opt.zero_grad()
                loss.backward()
                opt.step()
                epoch_loss += float(loss.detach()) * len(idx)
            loss_history.append(epoch_loss / n)

            if eval_set is not None:
                preds = self._predict_net(net, x_ev)
                err = seg_error(list(y_ev), list(preds)).error
                metric_history.append(err)
                if err < best_err:
                    best_err = err
                    best_epoch = epoch
                    best_state = copy.deepcopy(net.state_dict())

        if best_state is not None:
            net.load_state_dict(best_state)
        else:
            best_epoch = self.epochs - 1
        self.net_ = net
        self.loss_history_ = loss_history
        self.metric_history_ = metric_history
        self.best_epoch_ = best_epoch
        self.n_params_ = net.parameter_count()
        return self

    def _augmented_arrays(self, X, y, policy: AugmentPolicy):
        X = np.asarray(X)
        y = np.asarray(y)
        if X.dtype != np.uint8:
            raise ValueError("augmentation expects uint8 images")
        samples = [
            EyeSample(image=X[i], mask=y[i].astype(np.uint8), sample_id=str(i))
            for i in range(X.shape[0])
        ]
        expanded = augment_all(samples, policy)
        return (
            np.stack([s.image for s in expanded]),
            np.stack([s.mask for s in expanded]),
        )

    # -- inference ---------------------------------------------------------

    def _predict_net(self, net: PyramidFusionNet, xb: torch.Tensor) -> np.ndarray:
        net.eval()
        masks = []
        with torch.inference_mode():
            for start in range(0, xb.shape[0], max(self.batch_size, 4)):
                logits = net(xb[start : start + max(self.batch_size, 4)])
                prob = torch.softmax(logits, dim=1)
                masks.append((prob[:, 0] >= prob[:, 1]).to(torch.uint8).numpy())
        return np.concatenate(masks, axis=0)

    def predict(self, X) -> np.ndarray:
        check_fitted(self)
        return self._predict_net(self.net_, as_image_batch(X, self.input_size))

    def predict_proba(self, X) -> np.ndarray:
        check_fitted(self)
        xb = as_image_batch(X, self.input_size)
        self.net_.eval()
        outs = []
        with torch.inference_mode():
            for start in range(0, xb.shape[0], max(self.batch_size, 4)):
                logits = self.net_(xb[start : start + max(self.batch_size, 4)])
                outs.append(torch.softmax(logits, dim=1).numpy())
        return np.concatenate(outs, axis=0)

    def predict_mask(self, image) -> MaskPrediction:
        """Single-image prediction bundling probabilities and the argmax mask."""
        prob = self.predict_proba(np.asarray(image)[None])[0]
        mask = (prob[0] >= prob[1]).astype(np.uint8)
        return MaskPrediction(prob=prob, mask=mask)

    def score(self, X, y) -> float:
        """1 - segmentation error (higher is better)."""
        preds = self.predict(X)
        return 1.0 - seg_error(list(np.asarray(y)), list(preds)).error

    # -- persistence -------------------------------------------------------

    def save(self, path: Path) -> Path:
        check_fitted(self)
        return ckpt.save_checkpoint(
            path,
            estimator_name="PyramidSegmenter",
            params=self.get_params(),
            state_dict=self.net_.state_dict(),
            epoch=getattr(self, "best_epoch_", 0),
            train_loss=(self.loss_history_[-1] if getattr(self, "loss_history_", None) else None),
            loss_history=getattr(self, "loss_history_", []),
            metric_history=getattr(self, "metric_history_", []),
            rng_seed=self.seed,
        )

    @classmethod
    def load(cls, path: Path) -> "PyramidSegmenter":
        blob = ckpt.load_checkpoint(path)
        if blob["estimator"] != "PyramidSegmenter":
            raise ckpt.CheckpointError(
                f"{path} holds a {blob['estimator']} checkpoint, not a PyramidSegmenter"
            )
        est = cls(**blob["params"])
        net = PyramidFusionNet(est.build_config())
        net.load_state_dict(blob["state_dict"])
        net.eval()
        est.net_ = net
        est.loss_history_ = blob["sidecar"].get("loss_history", [])
        est.metric_history_ = blob["sidecar"].get("metric_history", [])
        est.best_epoch_ = blob["sidecar"].get("epoch", 0)
        est.n_params_ = net.parameter_count()
        return est
