"""Parameter-efficient adaptation of a frozen two-tower retrieval model.

Core pieces: a small f64 autodiff engine, a frozen ViT-style video tower
and transformer text tower, low-rank temporal feature modulation,
offset-warped self-attention with text-conditioned patch selection, a
contrastive retrieval head with ranking metrics, and an experiment
harness (synthetic data, training loop, checkpoints, ablations).
"""

from .config import ExperimentConfig, toy_config, vit_b32_shaped_config
from .counting import count_params
from .data import SyntheticDataset, generate_dataset
from .model import AdapterModel
from .retrieval import MetricsReport, SimilarityMatrix
from .tensor import ParamStore, Tensor, fd_check, no_grad, rng_for
from .train import evaluate_model, train

__all__ = [
    "AdapterModel",
    "ExperimentConfig",
    "MetricsReport",
    "ParamStore",
    "SimilarityMatrix",
    "SyntheticDataset",
    "Tensor",
    "count_params",
    "evaluate_model",
    "fd_check",
    "generate_dataset",
    "no_grad",
    "rng_for",
    "toy_config",
    "train",
    "vit_b32_shaped_config",
]
__version__ = "0.1.0"
