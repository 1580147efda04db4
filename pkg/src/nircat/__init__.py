"""nircat: iris/pupil segmentation and cataract screening on NIR eye images."""

from .augment import AugmentPolicy, augment, augment_all
from .classifier import CataractClassifier, MultitaskNet, MultitaskOutput
from .dataset import DatasetManifest, build_synthetic_corpus, load_manifest
from .eyegen import EyeGenParams, eye_geometry, generate_eye
from .experiments import run_ablation, run_pipeline
from .losses import LossWeights, bce, cce, seg_loss, total_loss
from .metrics import ClsEvalResult, SegEvalResult, cls_eval, seg_error
from .postprocess import StructuringElement, close, extract_roi
from .pyramid import FeatureMapSet, PyramidConfig, PyramidFusionNet
from .samples import EyeSample
from .segmenter import MaskPrediction, PyramidSegmenter

__version__ = "0.1.0"

__all__ = [
    "AugmentPolicy",
    "CataractClassifier",
    "ClsEvalResult",
    "DatasetManifest",
    "EyeGenParams",
    "EyeSample",
    "FeatureMapSet",
    "LossWeights",
    "MaskPrediction",
    "MultitaskNet",
    "MultitaskOutput",
    "PyramidConfig",
    "PyramidFusionNet",
    "PyramidSegmenter",
    "SegEvalResult",
    "StructuringElement",
    "augment",
    "augment_all",
    "bce",
    "build_synthetic_corpus",
    "cce",
    "close",
    "cls_eval",
    "extract_roi",
    "eye_geometry",
    "generate_eye",
    "load_manifest",
    "run_ablation",
    "run_pipeline",
    "seg_error",
    "seg_loss",
    "total_loss",
]
