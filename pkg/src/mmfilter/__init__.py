"""Multimodal sentiment regression with loss modulation and modality filtering."""

from .data import SynthConfig, Utterance, generate_synthetic, load_jsonl, save_jsonl
from .estimator import MultimodalRegressor
from .metrics import MetricsReport, compute_metrics
from .model import TrainConfig

__all__ = [
    "MetricsReport",
    "MultimodalRegressor",
    "SynthConfig",
    "TrainConfig",
    "Utterance",
    "compute_metrics",
    "generate_synthetic",
    "load_jsonl",
    "save_jsonl",
]

__version__ = "0.1.0"
