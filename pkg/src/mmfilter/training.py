"""Two-phase training loop, Adam and evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Sequence

import numpy as np

from .autodiff import ParamStore, backward
from .data import Utterance, check_dataset, labels
from .encoders import MODALITIES, EncoderConfig
from .exceptions import DataError, NumericalError
from .metrics import MetricsReport, compute_metrics
from .model import TrainConfig, multimodal_forward, multimodal_objective, unimodal_names, unimodal_objective

logger = logging.getLogger(__name__)


class Adam:
    """Adam with bias correction; moments and step counts kept per parameter.

    Per-parameter step counts keep the bias correction right for parameters
    that are only updated in one of the two phases.
    """

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t: dict[str, int] = {}

    def step(self, store: ParamStore, names: Sequence[str] | None = None) -> None:
        for name in store if names is None else names:
            p = store[name]
            g = p.grad
            if name not in self.m:
                self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
                self.t[name] = 0
            self.t[name] += 1
            t = self.t[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / (1.0 - self.beta1**t)
            v_hat = self.v[name] / (1.0 - self.beta2**t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class StepResult:
    phase1_loss: float
    phase2_loss: float
    keep: dict = field(default_factory=dict)


def stack_batch(batch: Sequence[Utterance]) -> tuple[dict, np.ndarray]:
    """Stack equal-length utterances into {modality: (B, T, d)} plus labels."""
    sigs = {u.signature for u in batch}
    if len(sigs) != 1:
        raise DataError(f"batch mixes sequence lengths {sorted(sigs)}")
    arrays = {m: np.stack([u.sequence(m) for u in batch]) for m in MODALITIES}
    return arrays, labels(batch)


def iter_batches(dataset: Sequence[Utterance], batch_size: int, rng: np.random.Generator | None) -> Iterator[list[int]]:
    """Index batches that never mix sequence-length signatures.

    With an rng the order is shuffled (items, then batches); without one the
    dataset order is kept.
    """
    order = np.arange(len(dataset)) if rng is None else rng.permutation(len(dataset))
    buckets: dict[tuple, list[int]] = {}
    for i in order:
        buckets.setdefault(dataset[i].signature, []).append(int(i))
    batches = [idx[s : s + batch_size] for idx in buckets.values() for s in range(0, len(idx), batch_size)]
    if rng is not None and len(batches) > 1:
        batches = [batches[i] for i in rng.permutation(len(batches))]
    yield from batches


def _check_finite(value: float, step: int, phase1: float, phase2: float) -> None:
    if not np.isfinite(value):
        raise NumericalError(f"non-finite loss at step {step}: phase1_loss={phase1} phase2_loss={phase2}")


def phase1_update(arrays, y, store, enc, cfg, opt, step=0) -> float:
    """Update the unimodal encoders (and shared head) under the modulated losses."""
    loss = unimodal_objective(arrays, y, store, enc, cfg)
    value = float(loss.data)
    _check_finite(value, step, value, float("nan"))
    backward(loss)
    opt.step(store, unimodal_names(store, cfg))
    store.zero_grad()
    return value


def phase2_update(arrays, y, store, enc, cfg, opt, rng, step=0, phase1=float("nan")) -> tuple[float, dict]:
    """Update every parameter under the multimodal loss (plus gate penalty)."""
    loss, decisions = multimodal_objective(arrays, y, store, enc, cfg, rng)
    value = float(loss.data)
    _check_finite(value, step, phase1, value)
    backward(loss)
    opt.step(store)
    store.zero_grad()
    keep = {m: float(np.mean(d.keep.data)) for m, d in decisions.items()}
    return value, keep


def train_step(batch, store: ParamStore, opt: Adam, cfg: TrainConfig, enc: EncoderConfig, rng: np.random.Generator, step: int = 0) -> StepResult:
    """One batch of the two-phase schedule: unimodal update, then whole model."""
    if len(batch) == 0:
        raise DataError("empty batch")
    arrays, y = stack_batch(batch)
    p1 = phase1_update(arrays, y, store, enc, cfg, opt, step)
    p2, keep = phase2_update(arrays, y, store, enc, cfg, opt, rng, step, p1)
    return StepResult(p1, p2, keep)


def predict_batches(dataset: Sequence[Utterance], store: ParamStore, enc: EncoderConfig, cfg: TrainConfig, batch_size: int = 256):
    """Deterministic forward pass. Returns predictions, fused embeddings and
    per-modality keep/replace/penalty arrays, all in dataset order."""
    cfg = replace(cfg, lam=cfg.final_lam, lam_warmup_epochs=0)
    n = len(dataset)
    preds = np.empty(n)
    fused = np.empty((n, cfg.d))
    gates = {m: {k: np.empty(n) for k in ("keep", "replace", "penalty")} for m in MODALITIES} if cfg.filter_mode != "none" else {}
    for idx in iter_batches(dataset, batch_size, None):
        arrays, _ = stack_batch([dataset[i] for i in idx])
        pred, x, decisions = multimodal_forward(arrays, store, enc, cfg, phase="eval")
        preds[idx] = pred.data
        fused[idx] = x.data
        for m, dec in decisions.items():
            gates[m]["keep"][idx] = dec.keep.data
            gates[m]["replace"][idx] = dec.replace.data
            gates[m]["penalty"][idx] = dec.penalty.data
    return preds, fused, gates


def evaluate(dataset: Sequence[Utterance], store: ParamStore, enc: EncoderConfig, cfg: TrainConfig) -> MetricsReport:
    if len(dataset) == 0:
        raise DataError("empty dataset")
    check_dataset(dataset, enc.input_dims)
    preds, _, _ = predict_batches(dataset, store, enc, cfg)
    return compute_metrics(preds, labels(dataset), cfg.zero_policy)


def format_log(record: dict) -> str:
    parts = []
    for k, v in record.items():
        parts.append(f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}")
    return " ".join(parts)


def fit(
    train: Sequence[Utterance],
    store: ParamStore,
    enc: EncoderConfig,
    cfg: TrainConfig,
    eval_set: Sequence[Utterance] | None = None,
    opt: Adam | None = None,
    rng: np.random.Generator | None = None,
    log: Callable[[str], None] | None = None,
) -> list[dict]:
    """Run ``cfg.epochs`` epochs of two-phase training; returns per-epoch records."""
    check_dataset(train, enc.input_dims)
    opt = opt or Adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    rng = rng or np.random.default_rng(cfg.seed)
    history = []
    step = 0
    base_cfg = cfg
    for epoch in range(1, base_cfg.epochs + 1):
        cfg = replace(base_cfg, lam=base_cfg.lam_at(epoch), lam_warmup_epochs=0)
        p1s, p2s, keeps = [], [], {m: [] for m in MODALITIES}
        batches = [[train[i] for i in idx] for idx in iter_batches(train, cfg.batch_size, rng)]
        if cfg.phase_schedule == "batch":
            for batch in batches:
                res = train_step(batch, store, opt, cfg, enc, rng, step)
                p1s.append(res.phase1_loss)
                p2s.append(res.phase2_loss)
                for m, k in res.keep.items():
                    keeps[m].append(k)
                step += 1
        else:
            stacked = [stack_batch(b) for b in batches]
            for arrays, y in stacked:
                p1s.append(phase1_update(arrays, y, store, enc, cfg, opt, step))
                step += 1
            for arrays, y in stacked:
                p2, keep = phase2_update(arrays, y, store, enc, cfg, opt, rng, step)
                p2s.append(p2)
                for m, k in keep.items():
                    keeps[m].append(k)
                step += 1
        record = {"epoch": epoch, "phase1_loss": float(np.mean(p1s)), "phase2_loss": float(np.mean(p2s))}
        if eval_set:
            report = evaluate(eval_set, store, enc, cfg)
            record.update(eval_mae=report.mae, eval_corr=report.corr, eval_acc2=report.acc2)
        for m in MODALITIES:
            if keeps[m]:
                record[f"keep_{m}"] = float(np.mean(keeps[m]))
        history.append(record)
        line = format_log(record)
        logger.info(line)
        if log is not None:
            log(line)
    return history
