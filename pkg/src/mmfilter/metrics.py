"""Sentiment regression metrics: Acc7, Acc2, F1, MAE, Corr."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import DataError

ZERO_EXCLUDED = "exclude"
ZERO_NEGATIVE = "negative"


@dataclass
class MetricsReport:
    acc7: float
    acc2: float
    f1: float
    mae: float
    corr: float
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)

    def lines(self) -> list[str]:
        return [f"{k}={getattr(self, k):.6f}" for k in ("acc7", "acc2", "f1", "mae", "corr")]


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def _pair(preds, labels) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if p.shape != y.shape:
        raise DataError(f"{p.size} predictions for {y.size} labels")
    if p.size == 0:
        raise DataError("empty dataset")
    return p, y


def metric_acc7(preds, labels) -> float:
    """Fraction whose clamped, rounded score class matches the label's."""
    p, y = _pair(preds, labels)
    cls = lambda v: round_half_away(np.clip(v, -3.0, 3.0))  # noqa: E731
    return float(np.mean(cls(p) == cls(y)))


def metric_acc2_f1(preds, labels, zero_policy: str = ZERO_EXCLUDED) -> tuple[float, float]:
    """Binary accuracy and positive-class F1.

    With ``zero_policy="exclude"`` (default) utterances labelled exactly 0 are
    dropped; with ``"negative"`` they count as the negative class. Returns
    NaNs when no utterance is left.
    """
    p, y = _pair(preds, labels)
    if zero_policy == ZERO_EXCLUDED:
        keep = y != 0
        p, y = p[keep], y[keep]
    elif zero_policy != ZERO_NEGATIVE:
        raise DataError(f"unknown zero policy {zero_policy!r}")
    if y.size == 0:
        return float("nan"), float("nan")
    truth, guess = y > 0, p > 0
    acc2 = float(np.mean(truth == guess))
    tp = np.sum(truth & guess)
    fp = np.sum(~truth & guess)
    fn = np.sum(truth & ~guess)
    f1 = 0.0 if tp == 0 else float(2 * tp / (2 * tp + fp + fn))
    return acc2, f1


def metric_mae(preds, labels) -> float:
    p, y = _pair(preds, labels)
    return float(np.mean(np.abs(p - y)))


def metric_corr(preds, labels) -> float:
    """Pearson correlation; 0 when either side has zero variance."""
    p, y = _pair(preds, labels)
    pc, yc = p - p.mean(), y - y.mean()
    denom = np.sqrt(np.sum(pc * pc) * np.sum(yc * yc))
    if denom == 0:
        return 0.0
    return float(np.clip(np.sum(pc * yc) / denom, -1.0, 1.0))


def compute_metrics(preds, labels, zero_policy: str = ZERO_EXCLUDED) -> MetricsReport:
    acc2, f1 = metric_acc2_f1(preds, labels, zero_policy)
    notes = []
    if np.isnan(acc2):
        notes.append("acc2/f1 undefined: every label is zero")
    return MetricsReport(
        acc7=metric_acc7(preds, labels),
        acc2=acc2,
        f1=f1,
        mae=metric_mae(preds, labels),
        corr=metric_corr(preds, labels),
        notes=notes,
    )
