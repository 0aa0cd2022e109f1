"""Whole-model assembly: parameter layout and batched forward passes."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Value
from .encoders import CLASSIFIER, MODALITIES, EncoderConfig, classify, encode, init_classifier, init_encoder
from .exceptions import ConfigError
from .fusion import FusionKind, fuse, init_fusion
from .mfm import (
    HARD,
    SOFT,
    FilterDecision,
    HardConcreteParams,
    apply_filter,
    feature_shift,
    filter_logits,
    filter_prefix,
    hard_decision,
    init_mfm,
    soft_decision,
)
from .modulation import DEFAULT_EPS, modulated_objective

FILTER_MODES = (SOFT, HARD, "none")


@dataclass
class TrainConfig:
    """Every knob of a run: architecture, ablations and optimisation."""

    # architecture
    d: int = 16
    kernel_size: int = 3
    n_layers: int = 1
    fusion: str = "addition"
    filter_mode: str = SOFT
    baseline: bool = True
    per_modality_filter: bool = False
    # mechanism
    modulation: bool = True
    modulation_eps: float = DEFAULT_EPS
    lam: float = 1000.0
    lam_start: float = 1.0
    lam_warmup_epochs: int = 10
    penalty_weight: float = 0.1
    hc_beta: float = 2.0 / 3.0
    hc_zeta: float = 1.1
    hc_gamma: float = -0.1
    # optimisation
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 20
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    phase_schedule: str = "batch"
    freeze_classifier_phase1: bool = False
    seed: int = 0
    # evaluation
    zero_policy: str = "exclude"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.learning_rate >= 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.filter_mode not in FILTER_MODES:
            raise ConfigError(f"filter_mode must be one of {FILTER_MODES}, got {self.filter_mode!r}")
        if self.phase_schedule not in ("batch", "epoch"):
            raise ConfigError(f"phase_schedule must be 'batch' or 'epoch', got {self.phase_schedule!r}")
        if self.zero_policy not in ("exclude", "negative"):
            raise ConfigError(f"zero_policy must be 'exclude' or 'negative', got {self.zero_policy!r}")
        if not self.lam > 0:
            raise ConfigError(f"lam must be positive, got {self.lam}")
        if not self.lam_start > 0 or self.lam_warmup_epochs < 0:
            raise ConfigError("lam_start must be positive and lam_warmup_epochs >= 0")
        if self.penalty_weight < 0:
            raise ConfigError("penalty_weight must be >= 0")
        FusionKind.parse(self.fusion)
        HardConcreteParams(self.hc_beta, self.hc_zeta, self.hc_gamma)
        EncoderConfig(d=self.d, kernel_size=self.kernel_size, n_layers=self.n_layers)

    @property
    def hard_concrete(self) -> HardConcreteParams:
        return HardConcreteParams(self.hc_beta, self.hc_zeta, self.hc_gamma)

    def lam_at(self, epoch: int) -> float:
        """Softmax scale for a 1-based epoch: geometric ramp from ``lam_start``
        to ``lam`` over ``lam_warmup_epochs`` epochs, then constant."""
        if self.lam_warmup_epochs == 0 or epoch > self.lam_warmup_epochs:
            return self.lam
        frac = (epoch - 1) / self.lam_warmup_epochs
        return float(self.lam_start * (self.lam / self.lam_start) ** frac)

    @property
    def final_lam(self) -> float:
        """Scale in force at the last trained epoch; used for inference."""
        return self.lam_at(max(self.epochs, 1))

    @property
    def ablation(self) -> str:
        """Name of the ablation this config represents ("full" if none)."""
        tags = []
        if not self.modulation:
            tags.append("no-ml")
        if self.filter_mode == "none":
            tags.append("no-mfm")
        elif not self.baseline:
            tags.append("no-be")
        return "+".join(tags) or "full"

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def encoder_config(cfg: TrainConfig, input_dims: dict) -> EncoderConfig:
    return EncoderConfig(input_dims=dict(input_dims), d=cfg.d, kernel_size=cfg.kernel_size, n_layers=cfg.n_layers)


def build_params(cfg: TrainConfig, input_dims: dict, rng: np.random.Generator | None = None) -> ParamStore:
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    enc = encoder_config(cfg, input_dims)
    store = ParamStore()
    for m in MODALITIES:
        init_encoder(store, m, enc, rng)
    init_classifier(store, cfg.d, rng)
    if cfg.filter_mode != "none":
        init_mfm(store, cfg.d, cfg.filter_mode, rng, cfg.per_modality_filter, cfg.baseline)
    init_fusion(store, FusionKind.parse(cfg.fusion), cfg.d, rng)
    return store


def unimodal_names(store: ParamStore, cfg: TrainConfig) -> list[str]:
    """Parameters updated by the modulated unimodal objective."""
    names = store.names("encoder.")
    if not cfg.freeze_classifier_phase1:
        names += store.names(f"{CLASSIFIER}.")
    return names


def embed(batch: dict, store: ParamStore, enc: EncoderConfig) -> dict[str, Value]:
    """Encode a batch given as {modality: (B, T, d_m) array}."""
    return {m: encode(batch[m], m, store, enc) for m in MODALITIES}


def unimodal_objective(batch: dict, y: np.ndarray, store: ParamStore, enc: EncoderConfig, cfg: TrainConfig) -> Value:
    emb = embed(batch, store, enc)
    target = ad.Value(y)
    losses = {m: ad.absolute(classify(emb[m], store) - target) for m in MODALITIES}
    return modulated_objective(losses, enabled=cfg.modulation, eps=cfg.modulation_eps)


def filter_embeddings(
    emb: dict[str, Value],
    store: ParamStore,
    cfg: TrainConfig,
    phase: str = "train",
    rng: np.random.Generator | None = None,
) -> tuple[dict[str, Value], dict[str, FilterDecision]]:
    """Run the modality filter; returns filtered embeddings and gate decisions."""
    if cfg.filter_mode == "none":
        return dict(emb), {}
    shifts = feature_shift(emb["language"], emb["acoustic"], emb["visual"], store)
    out, decisions = {}, {}
    for m in MODALITIES:
        z = filter_logits(shifts[m], store, filter_prefix(m, cfg.per_modality_filter))
        if cfg.filter_mode == SOFT:
            dec = soft_decision(z, cfg.lam)
        else:
            u = None
            if phase == "train":
                u = rng.uniform(np.nextafter(0.0, 1.0), 1.0, size=z.shape[:-1])
            dec = hard_decision(z[..., 0], cfg.hard_concrete, u, phase)
        baseline = store[f"baseline.{m}"] if cfg.baseline else None
        out[m] = apply_filter(emb[m], baseline, dec)
        decisions[m] = dec
    return out, decisions


def multimodal_forward(
    batch: dict,
    store: ParamStore,
    enc: EncoderConfig,
    cfg: TrainConfig,
    phase: str = "train",
    rng: np.random.Generator | None = None,
) -> tuple[Value, Value, dict[str, FilterDecision]]:
    """Returns (predictions (B,), fused embedding (B, d), gate decisions)."""
    emb = embed(batch, store, enc)
    filtered, decisions = filter_embeddings(emb, store, cfg, phase, rng)
    fused = fuse(cfg.fusion, filtered["language"], filtered["acoustic"], filtered["visual"], store)
    return classify(fused, store), fused, decisions


def multimodal_objective(
    batch: dict,
    y: np.ndarray,
    store: ParamStore,
    enc: EncoderConfig,
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
) -> tuple[Value, dict[str, FilterDecision]]:
    pred, _, decisions = multimodal_forward(batch, store, enc, cfg, "train", rng)
    loss = ad.mean(ad.absolute(pred - ad.Value(y)))
    if cfg.filter_mode == SOFT and cfg.penalty_weight > 0:
        penalty = decisions[MODALITIES[0]].penalty
        for m in MODALITIES[1:]:
            penalty = penalty + decisions[m].penalty
        loss = loss + ad.scale(ad.mean(penalty), cfg.penalty_weight)
    return loss, decisions
