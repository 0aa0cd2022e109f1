"""Modality filter: decide per utterance how much of each modality to keep.

The filter looks at the *feature shift* of a modality, the positive part of
the gap between a linear summary of all three embeddings and that modality's
own embedding. A small network turns the shift into a keep fraction, and the
rest is filled in with a learned per-modality baseline embedding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Value
from .encoders import MODALITIES, _glorot
from .exceptions import ConfigError, DataError, SamplingError

SOFT = "soft"
HARD = "hard"


@dataclass(frozen=True)
class HardConcreteParams:
    """Temperature and stretch interval of the Hard Concrete gate."""

    beta: float = 2.0 / 3.0
    zeta: float = 1.1
    gamma: float = -0.1

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigError(f"hard concrete temperature must be positive, got {self.beta}")
        if not (self.gamma < 0 < 1 < self.zeta):
            raise ConfigError(f"need gamma < 0 < 1 < zeta, got gamma={self.gamma}, zeta={self.zeta}")


@dataclass
class FilterDecision:
    """Gate output for one modality: keep + replace = 1."""

    mode: str
    keep: Value
    replace: Value
    penalty: Value


def filter_prefix(modality: str, per_modality: bool) -> str:
    return f"filter.{modality}" if per_modality else "filter"


def init_mfm(
    store: ParamStore,
    d: int,
    mode: str,
    rng: np.random.Generator,
    per_modality: bool = False,
    baseline: bool = True,
) -> None:
    store.add("mfm.linear.weight", _glorot(rng, 3 * d, d))
    store.add("mfm.linear.bias", np.zeros(d))
    n_out = 2 if mode == SOFT else 1
    prefixes = [filter_prefix(m, True) for m in MODALITIES] if per_modality else ["filter"]
    for p in prefixes:
        store.add(f"{p}.hidden.weight", _glorot(rng, d, d))
        store.add(f"{p}.hidden.bias", np.zeros(d))
        # zero output layer: every gate starts undecided (keep = 0.5)
        store.add(f"{p}.out.weight", np.zeros((d, n_out)))
        store.add(f"{p}.out.bias", np.zeros(n_out))
    if baseline:
        for m in MODALITIES:
            store.add(f"baseline.{m}", np.zeros(d))


def _rows(x: Value) -> tuple[Value, bool]:
    x = ad.as_value(x)
    if x.ndim == 1:
        return ad.reshape(x, (1, x.shape[0])), True
    return x, False


def feature_shift(x_l, x_a, x_v, store: ParamStore) -> dict[str, Value]:
    """ReLU(Linear(x_l ++ x_a ++ x_v) - x_m) for each modality."""
    xs = dict(zip(MODALITIES, (ad.as_value(x_l), ad.as_value(x_a), ad.as_value(x_v))))
    w = store["mfm.linear.weight"]
    d = w.shape[1]
    shapes = {x.shape for x in xs.values()}
    if len(shapes) != 1 or next(iter(shapes))[-1] != d:
        raise DataError(f"feature_shift: embeddings must all have width {d}, got {sorted(shapes)}")
    single = xs["language"].ndim == 1
    rows = {m: _rows(x)[0] for m, x in xs.items()}
    summary = ad.matmul(ad.concat([rows[m] for m in MODALITIES], axis=-1), w) + store["mfm.linear.bias"]
    shifts = {m: ad.relu(summary - rows[m]) for m in MODALITIES}
    if single:
        shifts = {m: ad.reshape(s, (d,)) for m, s in shifts.items()}
    return shifts


def filter_logits(shift, store: ParamStore, prefix: str = "filter") -> Value:
    """Two-layer ReLU network; returns (..., n_out) logits."""
    rows, single = _rows(shift)
    h = ad.relu(ad.matmul(rows, store[f"{prefix}.hidden.weight"]) + store[f"{prefix}.hidden.bias"])
    z = ad.matmul(h, store[f"{prefix}.out.weight"]) + store[f"{prefix}.out.bias"]
    return ad.reshape(z, (z.shape[-1],)) if single else z


def soft_decision(z: Value, lam: float) -> FilterDecision:
    """Scaled two-way softmax on logits z (..., 2)."""
    s = ad.softmax_scaled(z, lam)
    keep, replace = s[..., 0], s[..., 1]
    penalty = ad.clamp(1.0 - ad.square(keep - replace), 0.0, 1.0)
    return FilterDecision(SOFT, keep, replace, penalty)


def soft_filter(shift, lam: float, store: ParamStore, prefix: str = "filter") -> FilterDecision:
    return soft_decision(filter_logits(shift, store, prefix), lam)


def hard_decision(z: Value, hc: HardConcreteParams, u=None, phase: str = "train") -> FilterDecision:
    """Hard Concrete gate on scalar logits ``z`` (shape (...,)).

    Training uses the clamped stretched sample, which is differentiable almost
    everywhere. Evaluation is deterministic: keep is 1 iff the noiseless
    stretched gate exceeds 0.5.
    """
    z = ad.as_value(z)
    if phase == "train":
        u = np.asarray(u, dtype=np.float64)
        if u.shape != z.shape:
            raise SamplingError(f"noise shape {u.shape} does not match logits {z.shape}")
        if np.any(u <= 0.0) or np.any(u >= 1.0):
            raise SamplingError("hard concrete noise must lie strictly inside (0, 1)")
        noise = np.log(u) - np.log1p(-u)
        s_hat = ad.sigmoid(ad.scale(z + noise, 1.0 / hc.beta))
        stretched = ad.scale(s_hat, hc.zeta - hc.gamma) + hc.gamma
        keep = ad.clamp(stretched, 0.0, 1.0)
    elif phase == "eval":
        s_hat = ad.stable_sigmoid(np.atleast_1d(z.data / hc.beta)).reshape(z.shape)
        keep = ad.Value((s_hat * (hc.zeta - hc.gamma) + hc.gamma > 0.5).astype(np.float64))
    else:
        raise ConfigError(f"unknown phase {phase!r}")
    replace = 1.0 - keep
    return FilterDecision(HARD, keep, replace, ad.Value(np.zeros(z.shape)))


def hard_filter(shift, hc: HardConcreteParams, u, phase: str, store: ParamStore, prefix: str = "filter") -> FilterDecision:
    z = filter_logits(shift, store, prefix)
    return hard_decision(z[..., 0], hc, u, phase)


def sample_hard_concrete(z, hc: HardConcreteParams, u) -> np.ndarray:
    """Stretched (unclamped) gate value for logits z and uniform noise u."""
    z = np.asarray(z, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    s_hat = ad.stable_sigmoid(np.atleast_1d((np.log(u) - np.log1p(-u) + z) / hc.beta))
    return s_hat * (hc.zeta - hc.gamma) + hc.gamma


def apply_filter(x, baseline, dec: FilterDecision) -> Value:
    """keep * x + replace * baseline (baseline may be None: replace with zeros)."""
    x = ad.as_value(x)
    keep, replace = dec.keep, dec.replace
    if x.ndim == 2:
        keep = ad.reshape(keep, (x.shape[0], 1))
        replace = ad.reshape(replace, (x.shape[0], 1))
    out = keep * x
    if baseline is not None:
        baseline = ad.as_value(baseline)
        if baseline.shape[-1] != x.shape[-1]:
            raise DataError(f"baseline width {baseline.shape} does not match embedding {x.shape}")
        out = out + replace * baseline
    return out
