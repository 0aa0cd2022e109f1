"""Unimodal sequence encoders and the shared regression head."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Value
from .exceptions import ConfigError, DataError

MODALITIES = ("language", "acoustic", "visual")
CLASSIFIER = "classifier"


@dataclass
class EncoderConfig:
    """Shapes shared by the three encoders.

    ``input_dims`` maps each modality to its raw feature width. Every encoder
    maps into the same embedding width ``d`` so the classifier can be shared.
    """

    input_dims: dict = field(default_factory=lambda: {"language": 8, "acoustic": 4, "visual": 4})
    d: int = 16
    kernel_size: int = 3
    n_layers: int = 1

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError(f"embedding dim must be >= 1, got {self.d}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel size must be odd and positive, got {self.kernel_size}")
        if self.n_layers < 0:
            raise ConfigError(f"n_layers must be >= 0, got {self.n_layers}")
        missing = set(MODALITIES) - set(self.input_dims)
        if missing:
            raise ConfigError(f"input_dims missing modalities {sorted(missing)}")
        for m in MODALITIES:
            if int(self.input_dims[m]) < 1:
                raise ConfigError(f"input dim for {m} must be >= 1")


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_encoder(store: ParamStore, modality: str, cfg: EncoderConfig, rng: np.random.Generator) -> None:
    d_in, d, k = int(cfg.input_dims[modality]), cfg.d, cfg.kernel_size
    prefix = f"encoder.{modality}"
    store.add(f"{prefix}.conv.weight", _glorot(rng, k * d_in, d))
    store.add(f"{prefix}.conv.bias", np.zeros(d))
    for i in range(cfg.n_layers):
        for name in ("query", "key", "value", "out"):
            store.add(f"{prefix}.attn{i}.{name}", _glorot(rng, d, d))


def init_classifier(store: ParamStore, d: int, rng: np.random.Generator) -> None:
    store.add(f"{CLASSIFIER}.weight", _glorot(rng, d, 1))
    store.add(f"{CLASSIFIER}.bias", np.zeros(1))


def conv1d_same(x: Value, weight: Value, bias: Value, kernel_size: int) -> Value:
    """Temporal convolution with zero 'same' padding on a (B, T, d_in) batch."""
    half = kernel_size // 2
    T = x.shape[1]
    xp = ad.pad_axis(x, 1, half, half)
    windows = ad.concat([xp[:, k : k + T, :] for k in range(kernel_size)], axis=-1)
    return ad.matmul(windows, weight) + bias


def self_attention(h: Value, store: ParamStore, prefix: str) -> Value:
    """Single-head scaled dot-product self-attention with a residual add."""
    d = h.shape[-1]
    q = ad.matmul(h, store[f"{prefix}.query"])
    k = ad.matmul(h, store[f"{prefix}.key"])
    v = ad.matmul(h, store[f"{prefix}.value"])
    scores = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(d))
    weights = ad.softmax(scores, axis=-1)
    mixed = ad.matmul(ad.matmul(weights, v), store[f"{prefix}.out"])
    return h + mixed


def encode(seq, modality: str, store: ParamStore, cfg: EncoderConfig) -> Value:
    """Embed one sequence (T, d_m) or a batch (B, T, d_m).

    Returns the last-timestep hidden state: shape (d,) or (B, d).
    """
    x = ad.as_value(seq)
    single = x.ndim == 2
    if single:
        x = ad.reshape(x, (1,) + x.shape)
    if x.ndim != 3:
        raise DataError(f"{modality}: expected a (T, d) sequence or (B, T, d) batch, got shape {x.shape}")
    if x.shape[1] < 1:
        raise DataError(f"{modality}: empty sequence")
    d_in = int(cfg.input_dims[modality])
    if x.shape[2] != d_in:
        raise DataError(f"{modality}: feature dim {x.shape[2]} does not match configured {d_in}")

    prefix = f"encoder.{modality}"
    h = conv1d_same(x, store[f"{prefix}.conv.weight"], store[f"{prefix}.conv.bias"], cfg.kernel_size)
    for i in range(cfg.n_layers):
        h = self_attention(h, store, f"{prefix}.attn{i}")
    last = h[:, -1, :]
    return ad.reshape(last, (cfg.d,)) if single else last


def classify(x, store: ParamStore) -> Value:
    """Shared affine head: one scalar per embedding row."""
    x = ad.as_value(x)
    w = store[f"{CLASSIFIER}.weight"]
    d = w.shape[0]
    if x.shape[-1] != d:
        raise DataError(f"classifier expects dim {d}, got shape {x.shape}")
    single = x.ndim == 1
    rows = ad.reshape(x, (1, d)) if single else x
    y = ad.matmul(rows, w) + store[f"{CLASSIFIER}.bias"]
    return ad.reshape(y, ()) if single else ad.reshape(y, (rows.shape[0],))
