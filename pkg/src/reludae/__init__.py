"""Two-layer ReLU denoising autoencoders: training, closed-form minimizers,
DDIM sampling, memorization detection and representation steering."""
from .data import Dataset, MoGSpec, check_separability, compute_margin, mog_spec, sample_mog
from .estimators import ClosedFormDAE, ReluDAE
from .model import DaeModel, forward, jacobian, mask_frozen_loss, mc_loss, representation
from .trainer import OptimizerConfig, train

__version__ = "0.1.0"

__all__ = [
    "ClosedFormDAE",
    "DaeModel",
    "Dataset",
    "MoGSpec",
    "OptimizerConfig",
    "ReluDAE",
    "check_separability",
    "compute_margin",
    "forward",
    "jacobian",
    "mask_frozen_loss",
    "mc_loss",
    "mog_spec",
    "representation",
    "sample_mog",
    "train",
]
