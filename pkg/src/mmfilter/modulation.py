"""Cross-modal loss modulation.

Each unimodal loss is reweighted by the product of the *other* modalities'
losses, scaled by the harmonic mean of all three. The weights are constants
as far as gradients go: a modality's network only ever sees its own error.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from . import autodiff as ad
from .autodiff import Value

DEFAULT_EPS = 1e-8


def _loss_data(losses: Mapping[str, object]) -> dict[str, np.ndarray]:
    return {m: np.asarray(l.data if isinstance(l, Value) else l, dtype=np.float64) for m, l in losses.items()}


def harmonic_scale(losses: Mapping[str, object], eps: float = DEFAULT_EPS) -> np.ndarray:
    """Harmonic mean of the unimodal losses (elementwise over utterances)."""
    data = _loss_data(losses)
    return len(data) / np.sum([1.0 / (v + eps) for v in data.values()], axis=0)


def modality_weight(losses: Mapping[str, object], modality: str, eps: float = DEFAULT_EPS) -> np.ndarray:
    data = _loss_data(losses)
    weight = harmonic_scale(data, eps)
    for m, v in data.items():
        if m != modality:
            weight = weight * v
    return weight


def modulated_loss(losses: Mapping[str, Value], modality: str, eps: float = DEFAULT_EPS) -> Value:
    """``weight * loss[modality]`` where only the loss factor carries gradient."""
    weight = ad.Value(modality_weight(losses, modality, eps))
    return ad.mul(weight, ad.as_value(losses[modality]))


def modulated_objective(losses: Mapping[str, Value], enabled: bool = True, eps: float = DEFAULT_EPS) -> Value:
    """Batch mean of the summed per-utterance (modulated) unimodal losses."""
    terms = [modulated_loss(losses, m, eps) if enabled else ad.as_value(losses[m]) for m in losses]
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return ad.mean(total)
