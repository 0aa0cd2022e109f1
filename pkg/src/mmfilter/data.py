"""Utterance records, synthetic data with controllable noise, JSONL I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoders import MODALITIES
from .exceptions import ConfigError, DataError, ParseError, SchemaError

LABEL_RANGE = (-3.0, 3.0)


@dataclass
class Utterance:
    id: str
    label: float
    language: np.ndarray
    acoustic: np.ndarray
    visual: np.ndarray
    noise_flags: dict | None = None

    def __post_init__(self):
        self.label = float(self.label)
        for m in MODALITIES:
            setattr(self, m, np.asarray(getattr(self, m), dtype=np.float64))

    def sequence(self, modality: str) -> np.ndarray:
        return getattr(self, modality)

    @property
    def signature(self) -> tuple:
        """Sequence lengths per modality; utterances batch together only if equal."""
        return tuple(self.sequence(m).shape[0] for m in MODALITIES)


def check_utterance(u: Utterance, dims: dict | None = None) -> None:
    lo, hi = LABEL_RANGE
    if not (np.isfinite(u.label) and lo <= u.label <= hi):
        raise DataError(f"utterance {u.id}: label {u.label} outside [{lo}, {hi}]")
    for m in MODALITIES:
        seq = u.sequence(m)
        if seq.ndim != 2:
            raise DataError(f"utterance {u.id}: {m} must be a (T, d) array, got shape {seq.shape}")
        if seq.shape[0] < 1:
            raise DataError(f"utterance {u.id}: {m} sequence is empty")
        if dims is not None and seq.shape[1] != dims[m]:
            raise DataError(f"utterance {u.id}: {m} feature dim {seq.shape[1]} != {dims[m]}")
        if not np.all(np.isfinite(seq)):
            raise DataError(f"utterance {u.id}: {m} contains non-finite values")


def check_dataset(dataset: Sequence[Utterance], dims: dict | None = None) -> dict:
    """Validate a dataset and return its per-modality feature dims."""
    if dataset is None or len(dataset) == 0:
        raise DataError("empty dataset")
    for u in dataset:
        if not isinstance(u, Utterance):
            raise DataError(f"expected Utterance records, got {type(u).__name__}")
    if dims is None:
        first = dataset[0]
        dims = {m: first.sequence(m).shape[-1] if first.sequence(m).ndim == 2 else -1 for m in MODALITIES}
    for u in dataset:
        check_utterance(u, dims)
    return dims


def labels(dataset: Sequence[Utterance]) -> np.ndarray:
    return np.array([u.label for u in dataset], dtype=np.float64)


@dataclass
class SynthConfig:
    """Generator settings.

    ``informativeness`` w_m scales down additive noise (w_m = 1 means none);
    ``noise_prob`` p_m is the chance that a whole modality sequence is replaced
    by pure noise.
    """

    n: int = 2000
    seq_len: dict = field(default_factory=lambda: {m: 8 for m in MODALITIES})
    dims: dict = field(default_factory=lambda: {"language": 8, "acoustic": 4, "visual": 4})
    informativeness: dict = field(default_factory=lambda: {m: 1.0 for m in MODALITIES})
    noise_prob: dict = field(default_factory=lambda: {m: 0.0 for m in MODALITIES})
    sigma: float = 0.0
    latent_dim: int = 2
    noise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"dataset size must be >= 1, got {self.n}")
        if self.sigma < 0 or self.noise_scale < 0:
            raise ConfigError("noise amplitudes must be >= 0")
        if self.latent_dim < 0:
            raise ConfigError("latent_dim must be >= 0")
        for m in MODALITIES:
            if int(self.seq_len[m]) < 1:
                raise ConfigError(f"{m}: sequence length must be >= 1")
            if int(self.dims[m]) < 1:
                raise ConfigError(f"{m}: feature dim must be >= 1")
            if not 0.0 <= self.informativeness[m] <= 1.0:
                raise ConfigError(f"{m}: informativeness must lie in [0, 1]")
            if not 0.0 <= self.noise_prob[m] <= 1.0:
                raise ConfigError(f"{m}: noise probability must lie in [0, 1]")


def generate_synthetic(cfg: SynthConfig) -> list[Utterance]:
    """Draw labels uniformly on [-3, 3] and encode them linearly per modality.

    Each timestep of modality m is ``M_m @ [y, latent] + N(0, sigma * (1 - w_m))``
    with a fixed random map M_m. With probability p_m the whole sequence is
    swapped for N(0, noise_scale) noise and flagged.
    """
    rng = np.random.default_rng(cfg.seed)
    k = 1 + cfg.latent_dim
    maps = {m: rng.normal(0.0, 1.0 / np.sqrt(k), size=(int(cfg.dims[m]), k)) for m in MODALITIES}
    ys = rng.uniform(*LABEL_RANGE, size=cfg.n)
    out = []
    for i, y in enumerate(ys):
        seqs, flags = {}, {}
        for m in MODALITIES:
            T, d = int(cfg.seq_len[m]), int(cfg.dims[m])
            latent = rng.normal(size=(T, cfg.latent_dim))
            source = np.concatenate([np.full((T, 1), y), latent], axis=1)
            jitter = rng.normal(0.0, 1.0, size=(T, d)) * (cfg.sigma * (1.0 - cfg.informativeness[m]))
            seq = source @ maps[m].T + jitter
            noisy = bool(rng.random() < cfg.noise_prob[m])
            if noisy:
                seq = rng.normal(0.0, cfg.noise_scale, size=(T, d))
            seqs[m], flags[m] = seq, noisy
        out.append(Utterance(id=f"u{i:05d}", label=float(y), noise_flags=flags, **seqs))
    return out


def train_val_test_split(dataset: Sequence[Utterance], ratios=(0.7, 0.1, 0.2), seed: int = 0):
    """Seeded shuffle, then cut into train/val/test by ``ratios``."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or not np.isclose(np.sum(ratios), 1.0):
        raise ConfigError(f"split ratios must be three nonnegative numbers summing to 1, got {ratios}")
    order = np.random.default_rng(seed).permutation(len(dataset))
    n_train = int(round(ratios[0] * len(dataset)))
    n_val = int(round(ratios[1] * len(dataset)))
    pick = lambda idx: [dataset[i] for i in idx]  # noqa: E731
    return pick(order[:n_train]), pick(order[n_train : n_train + n_val]), pick(order[n_train + n_val :])


# ---------------------------------------------------------------------------
# JSONL


def utterance_to_json(u: Utterance) -> str:
    record = {"id": u.id, "label": u.label}
    for m in MODALITIES:
        record[m] = u.sequence(m).tolist()
    if u.noise_flags is not None:
        record["noise_flags"] = {m: bool(u.noise_flags[m]) for m in MODALITIES}
    return json.dumps(record)


def save_jsonl(dataset: Sequence[Utterance], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for u in dataset:
            fh.write(utterance_to_json(u))
            fh.write("\n")


def _parse_line(line: str, lineno: int) -> Utterance:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(record, dict):
        raise ParseError(f"line {lineno}: expected a JSON object")
    missing = [k for k in ("id", "label", *MODALITIES) if k not in record]
    if missing:
        raise ParseError(f"line {lineno}: missing fields {missing}")
    try:
        seqs = {m: np.array(record[m], dtype=np.float64) for m in MODALITIES}
        label = float(record["label"])
    except (TypeError, ValueError):
        raise ParseError(f"line {lineno}: non-numeric or ragged feature arrays") from None
    flags = record.get("noise_flags")
    u = Utterance(id=str(record["id"]), label=label, noise_flags=flags, **seqs)
    try:
        check_utterance(u)
    except DataError as exc:
        raise ParseError(f"line {lineno}: {exc}") from None
    return u


def load_jsonl(path) -> list[Utterance]:
    dataset, dims = [], None
    with open(Path(path), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            u = _parse_line(line, lineno)
            these = {m: u.sequence(m).shape[1] for m in MODALITIES}
            if dims is None:
                dims = these
            elif these != dims:
                raise SchemaError(f"line {lineno}: feature dims {these} differ from first record {dims}")
            dataset.append(u)
    if not dataset:
        raise DataError("empty dataset")
    return dataset
