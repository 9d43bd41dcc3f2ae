"""One-shot image restoration with a patch-based recurrent encoder-decoder."""

from .checkpoint import load_checkpoint, save_checkpoint
from .degrade import DegradationSpec, degrade, make_gaussian_kernel
from .images import PlanarImage, load_image, save_image
from .linalg import Rng
from .metrics import Metrics, compute_metrics
from .model import RnnModel
from .patching import PatchGeometry
from .train import TrainConfig, restore, train_one_shot

__version__ = "0.1.0"

__all__ = [
    "DegradationSpec",
    "Metrics",
    "PatchGeometry",
    "PlanarImage",
    "Rng",
    "RnnModel",
    "TrainConfig",
    "compute_metrics",
    "degrade",
    "load_checkpoint",
    "load_image",
    "make_gaussian_kernel",
    "restore",
    "save_checkpoint",
    "save_image",
    "train_one_shot",
]
