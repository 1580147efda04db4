"""Multitask cataract classifier: shared backbone, GAP, two heads.

Task 1 is binary (healthy vs unhealthy, sigmoid head, positive class =
unhealthy); task 2 is three-way (pre-cataract / post-cataract / others,
softmax head).  The default backbone is a compact four-stage CNN trained
from scratch; the *_style backbones reuse standard torchvision
architectures with randomly initialized weights and an optional local
state-dict hook.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from sklearn.base import BaseEstimator
from torch import nn

from . import checkpoint as ckpt
from .augment import AugmentPolicy, augment_all
from .losses import LossWeights, bce, cce
from .samples import EyeSample
from .validation import as_image_batch, as_label_array, check_fitted

BACKBONES = (
    "small_scratch",
    "resnet50_style",
    "vgg16_style",
    "inception_style",
    "densenet121_style",
)


@dataclass
class MultitaskOutput:
    """p_t1: probability of unhealthy; dist_t2: (pre, post, others) distribution."""

    p_t1: float
    dist_t2: np.ndarray


class SmallScratchBackbone(nn.Module):
    """Four conv stages with aggressive pooling; cheap enough for CPU training."""

    def __init__(self, base_width: int = 16):
        super().__init__()
        w = base_width
        widths = [w, 2 * w, 4 * w, 24 * w]
        pools = [2, 4, 2]
        layers: list[nn.Module] = []
        c_in = 1
        for i, c_out in enumerate(widths):
            layers += [
                nn.Conv2d(c_in, c_out, kernel_size=3, padding=1, bias=False),
                nn.BatchNorm2d(c_out),
                nn.ReLU(inplace=True),
            ]
            if i < len(pools):
                layers.append(nn.MaxPool2d(pools[i]))
            c_in = c_out
        self.features = nn.Sequential(*layers)
        self.out_channels = widths[-1]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.features(x)


def _torchvision_backbone(name: str) -> tuple[nn.Module, int]:
    """Standard architecture bodies, adapted to 1-channel input, no pretrained weights."""
    from torchvision import models

    if name == "resnet50_style":
        net = models.resnet50(weights=None)
        net.conv1 = nn.Conv2d(1, 64, kernel_size=7, stride=2, padding=3, bias=False)
        feat = net.fc.in_features
        net.fc = nn.Identity()
        net.avgpool = nn.Identity()
        body = _ResNetBody(net)
        return body, feat
    if name == "vgg16_style":
        net = models.vgg16(weights=None)
        first = net.features[0]
        net.features[0] = nn.Conv2d(1, first.out_channels, kernel_size=3, padding=1)
        return net.features, 512
    if name == "densenet121_style":
        net = models.densenet121(weights=None)
        net.features.conv0 = nn.Conv2d(1, 64, kernel_size=7, stride=2, padding=3, bias=False)
        return net.features, net.classifier.in_features
    if name == "inception_style":
        # Inception needs RGB-sized stems; replicate grayscale to 3 channels.
        net = models.inception_v3(weights=None, aux_logits=True, init_weights=True)
        net.fc = nn.Identity()
        net.AuxLogits = None
        return _InceptionBody(net), 2048
    raise ValueError(f"unknown backbone: {name!r}")


class _ResNetBody(nn.Module):
    def __init__(self, net):
        super().__init__()
        self.net = net

    def forward(self, x):
        n = self.net
        x = n.maxpool(n.relu(n.bn1(n.conv1(x))))
        x = n.layer4(n.layer3(n.layer2(n.layer1(x))))
        return x


class _InceptionBody(nn.Module):
    def __init__(self, net):
        super().__init__()
        self.net = net

    def forward(self, x):
        x = x.repeat(1, 3, 1, 1)
        n = self.net
        x = n.Conv2d_1a_3x3(x)
        x = n.Conv2d_2a_3x3(x)
        x = n.Conv2d_2b_3x3(x)
        x = n.maxpool1(x)
        x = n.Conv2d_3b_1x1(x)
        x = n.Conv2d_4a_3x3(x)
        x = n.maxpool2(x)
        x = n.Mixed_5b(x)
        x = n.Mixed_5c(x)
        x = n.Mixed_5d(x)
        x = n.Mixed_6a(x)
        x = n.Mixed_6b(x)
        x = n.Mixed_6c(x)
        x = n.Mixed_6d(x)
        x = n.Mixed_6e(x)
        x = n.Mixed_7a(x)
        x = n.Mixed_7b(x)
        x = n.Mixed_7c(x)
        return x


class MultitaskNet(nn.Module):
    """Backbone features -> global average pooling -> one linear head per task."""

    def __init__(self, backbone: str = "small_scratch", base_width: int = 16):
        super().__init__()
        if backbone == "small_scratch":
            self.backbone = SmallScratchBackbone(base_width)
            feat = self.backbone.out_channels
        else:
            self.backbone, feat = _torchvision_backbone(backbone)
        self.gap = nn.AdaptiveAvgPool2d(1)
        self.head_t1 = nn.Linear(feat, 1)
        self.head_t2 = nn.Linear(feat, 3)

    def pooled_features(self, x: torch.Tensor) -> torch.Tensor:
        return self.gap(self.backbone(x)).flatten(1)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns (task-1 logits (N,), task-2 logits (N, 3))."""
        f = self.pooled_features(x)
        return self.head_t1(f).squeeze(-1), self.head_t2(f)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters() if p.requires_grad)

    def load_backbone_weights(self, path: Path) -> tuple[int, int]:
        """Load a local state dict into the backbone; returns (missing, unexpected)."""
        state = torch.load(Path(path), map_location="cpu", weights_only=False)
        if isinstance(state, dict) and "state_dict" in state:
            state = state["state_dict"]
        result = self.backbone.load_state_dict(state, strict=False)
        return len(result.missing_keys), len(result.unexpected_keys)


class CataractClassifier(BaseEstimator):
    """Multitask classifier over segmented 224x224 ROIs.

    fit(X, y) takes (N, H, W) ROIs and (N, 2) integer labels: column 0 is
    the task-1 code (0 healthy / 1 unhealthy), column 1 the task-2 code
    (0 pre / 1 post / 2 others).  Joint loss = loss_lambda * BCE + CCE.
    """

    def __init__(
        self,
        backbone: str = "small_scratch",
        base_width: int = 16,
        pretrained_weights_path=None,
        input_size: int = 224,
        epochs: int = 100,
        lr: float = 1e-5,
        batch_size: int = 4,
        loss_lambda: float = 0.5,
        seed: int = 0,
    ):
        self.backbone = backbone
        self.base_width = base_width
        self.pretrained_weights_path = pretrained_weights_path
        self.input_size = input_size
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.loss_lambda = loss_lambda
        self.seed = seed
        self.net_ = None

    def build_net(self) -> MultitaskNet:
        if self.backbone not in BACKBONES:
            raise ValueError(f"backbone must be one of {BACKBONES}, got {self.backbone!r}")
        if self.epochs < 1 or self.lr <= 0 or self.batch_size < 1:
            raise ValueError("epochs >= 1, lr > 0 and batch_size >= 1 required")
        torch.manual_seed(self.seed)
        net = MultitaskNet(self.backbone, self.base_width)
        if self.pretrained_weights_path is not None:
            net.load_backbone_weights(self.pretrained_weights_path)
        return net

    def fit(self, X, y, eval_set=None, augment: AugmentPolicy | None = None):
        net = self.build_net()
        if augment is not None:
            X, y = self._augmented_arrays(X, y, augment)
        xb = as_image_batch(X, self.input_size)
        yb = as_label_array(y, xb.shape[0])
        y1 = torch.from_numpy(yb[:, 0]).to(torch.float32)
        y2 = torch.from_numpy(yb[:, 1])
        if eval_set is not None:
            x_ev = as_image_batch(eval_set[0], self.input_size)
            y_ev = as_label_array(eval_set[1], x_ev.shape[0])

        n = xb.shape[0]
        self.effective_train_size_ = n
        rng = np.random.default_rng(self.seed)
        opt = torch.optim.Adam(net.parameters(), lr=self.lr, betas=(0.9, 0.999), eps=1e-8)
        weights = LossWeights(self.loss_lambda)

        loss_history: list[float] = []
        metric_history: list[dict] = []
        best_acc = -1.0
        best_state = None
        best_epoch = self.epochs - 1
        for epoch in range(self.epochs):
            net.train()
            perm = rng.permutation(n)
            epoch_loss = 0.0
            for start in range(0, n, self.batch_size):
                idx = perm[start : start + self.batch_size]
                logit1, logit2 = net(xb[idx])
                p1 = torch.sigmoid(logit1)
                dist2 = torch.softmax(logit2, dim=1)
                loss = weights.lam * bce(p1, y1[idx]) + cce(dist2, y2[idx])
                opt.zero_grad()
                loss.backward()
                opt.step()
                epoch_loss += float(loss.detach()) * len(idx)
            loss_history.append(epoch_loss / n)

            if eval_set is not None:
                pred = self._predict_net(net, x_ev)
                acc1 = float((pred[:, 0] == y_ev[:, 0]).mean())
                acc2 = float((pred[:, 1] == y_ev[:, 1]).mean())
                metric_history.append({"t1_accuracy": acc1, "t2_accuracy": acc2})
                if acc2 > best_acc:
                    best_acc = acc2
                    best_epoch = epoch
                    best_state = copy.deepcopy(net.state_dict())

        if best_state is not None:
            net.load_state_dict(best_state)
        self.net_ = net
        self.loss_history_ = loss_history
        self.metric_history_ = metric_history
        self.best_epoch_ = best_epoch
        self.n_params_ = net.parameter_count()
        return self

    def _augmented_arrays(self, X, y, policy: AugmentPolicy):
        X = np.asarray(X)
        y = as_label_array(y, X.shape[0])
        if X.dtype != np.uint8:
            raise ValueError("augmentation expects uint8 images")
        samples = [EyeSample(image=X[i], sample_id=str(i)) for i in range(X.shape[0])]
        out_x, out_y = [], []
        for i, s in enumerate(samples):
            for variant in augment_all([s], policy):
                out_x.append(variant.image)
                out_y.append(y[i])
        return np.stack(out_x), np.stack(out_y)

    # -- inference ---------------------------------------------------------

    def _forward_probs(self, net: MultitaskNet, xb: torch.Tensor):
        net.eval()
        p1s, d2s = [], []
        with torch.inference_mode():
            for start in range(0, xb.shape[0], max(self.batch_size, 8)):
                logit1, logit2 = net(xb[start : start + max(self.batch_size, 8)])
                p1s.append(torch.sigmoid(logit1).numpy())
                d2s.append(torch.softmax(logit2, dim=1).numpy())
        return np.concatenate(p1s), np.concatenate(d2s)

    def _predict_net(self, net: MultitaskNet, xb: torch.Tensor) -> np.ndarray:
        p1, d2 = self._forward_probs(net, xb)
        return np.stack([(p1 >= 0.5).astype(np.int64), d2.argmax(axis=1)], axis=1)

    def predict(self, X) -> np.ndarray:
        """(N, 2) integer codes: column 0 task-1, column 1 task-2."""
        check_fitted(self)
        return self._predict_net(self.net_, as_image_batch(X, self.input_size))

    def predict_proba(self, X) -> tuple[np.ndarray, np.ndarray]:
        """(p_t1 of shape (N,), dist_t2 of shape (N, 3))."""
        check_fitted(self)
        return self._forward_probs(self.net_, as_image_batch(X, self.input_size))

    def predict_output(self, roi) -> MultitaskOutput:
        p1, d2 = self.predict_proba(np.asarray(roi)[None])
        return MultitaskOutput(p_t1=float(p1[0]), dist_t2=d2[0])

    def features(self, X) -> np.ndarray:
        """Pooled backbone features (N, C), e.g. for embedding plots."""
        check_fitted(self)
        xb = as_image_batch(X, self.input_size)
        self.net_.eval()
        outs = []
        with torch.inference_mode():
            for start in range(0, xb.shape[0], max(self.batch_size, 8)):
                outs.append(
                    self.net_.pooled_features(xb[start : start + max(self.batch_size, 8)]).numpy()
                )
        return np.concatenate(outs)

    def score(self, X, y) -> float:
        """Task-2 accuracy (model-selection metric)."""
        pred = self.predict(X)
        yb = as_label_array(y, pred.shape[0])
        return float((pred[:, 1] == yb[:, 1]).mean())

    # -- persistence -------------------------------------------------------

    def save(self, path: Path) -> Path:
        check_fitted(self)
        return ckpt.save_checkpoint(
            path,
            estimator_name="CataractClassifier",
            params=self.get_params(),
            state_dict=self.net_.state_dict(),
            epoch=getattr(self, "best_epoch_", 0),
            train_loss=(self.loss_history_[-1] if getattr(self, "loss_history_", None) else None),
            loss_history=getattr(self, "loss_history_", []),
            metric_history=getattr(self, "metric_history_", []),
            rng_seed=self.seed,
        )

    @classmethod
    def load(cls, path: Path) -> "CataractClassifier":
        blob = ckpt.load_checkpoint(path)
        if blob["estimator"] != "CataractClassifier":
            raise ckpt.CheckpointError(
                f"{path} holds a {blob['estimator']} checkpoint, not a CataractClassifier"
            )
        est = cls(**blob["params"])
        torch.manual_seed(est.seed)
        net = MultitaskNet(est.backbone, est.base_width)
        net.load_state_dict(blob["state_dict"])
        net.eval()
        est.net_ = net
        est.loss_history_ = blob["sidecar"].get("loss_history", [])
        est.metric_history_ = blob["sidecar"].get("metric_history", [])
        est.best_epoch_ = blob["sidecar"].get("epoch", 0)
        est.n_params_ = net.parameter_count()
        return est
