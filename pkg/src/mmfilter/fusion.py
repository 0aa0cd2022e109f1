"""Fusion of the three filtered embeddings into one width-d vector."""

from __future__ import annotations

from enum import Enum

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Value
from .encoders import _glorot
from .exceptions import ConfigError, DataError


class FusionKind(str, Enum):
    ADDITION = "addition"
    CONCAT_FC = "concat_fc"
    TENSOR = "tensor"

    @classmethod
    def parse(cls, name) -> "FusionKind":
        try:
            return cls(name)
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ConfigError(f"unknown fusion kind {name!r} (choose from {choices})") from None


def init_fusion(store: ParamStore, kind: FusionKind, d: int, rng: np.random.Generator) -> None:
    kind = FusionKind.parse(kind)
    if kind is FusionKind.CONCAT_FC:
        store.add("fusion.weight", _glorot(rng, 3 * d, d))
        store.add("fusion.bias", np.zeros(d))
    elif kind is FusionKind.TENSOR:
        store.add("fusion.weight", _glorot(rng, (d + 1) ** 3, d))
        store.add("fusion.bias", np.zeros(d))


def _check(xs) -> list[Value]:
    xs = [ad.as_value(x) for x in xs]
    shapes = {x.shape for x in xs}
    if len(shapes) != 1:
        raise DataError(f"fusion inputs must share one shape, got {[x.shape for x in xs]}")
    return xs


def fuse_addition(x_l, x_a, x_v) -> Value:
    x_l, x_a, x_v = _check((x_l, x_a, x_v))
    return x_l + x_a + x_v


def fuse_concat(x_l, x_a, x_v, store: ParamStore) -> Value:
    xs = _check((x_l, x_a, x_v))
    w = store["fusion.weight"]
    if 3 * xs[0].shape[-1] != w.shape[0]:
        raise DataError(f"concat fusion expects width {w.shape[0] // 3}, got {xs[0].shape[-1]}")
    joined = ad.concat(xs, axis=-1)
    single = joined.ndim == 1
    rows = ad.reshape(joined, (1, joined.shape[0])) if single else joined
    out = ad.matmul(rows, w) + store["fusion.bias"]
    return ad.reshape(out, (w.shape[1],)) if single else out


def outer3(x_l, x_a, x_v) -> Value:
    """Flattened outer product of the 1-padded embeddings.

    Index order is row-major over (language, acoustic, visual): entry
    ``i * (d+1)**2 + j * (d+1) + k`` holds ``l'[i] * a'[j] * v'[k]``.
    """
    xs = _check((x_l, x_a, x_v))
    single = xs[0].ndim == 1
    if single:
        xs = [ad.reshape(x, (1, x.shape[0])) for x in xs]
    B, d = xs[0].shape
    p = d + 1
    padded = [ad.concat([x, ad.Value(np.ones((B, 1)))], axis=-1) for x in xs]
    la = ad.reshape(padded[0], (B, p, 1)) * ad.reshape(padded[1], (B, 1, p))
    lav = ad.reshape(la, (B, p * p, 1)) * ad.reshape(padded[2], (B, 1, p))
    flat = ad.reshape(lav, (B, p**3))
    return ad.reshape(flat, (p**3,)) if single else flat


def fuse_tensor(x_l, x_a, x_v, store: ParamStore) -> Value:
    flat = outer3(x_l, x_a, x_v)
    w = store["fusion.weight"]
    if flat.shape[-1] != w.shape[0]:
        raise DataError(f"tensor fusion expects {w.shape[0]} outer-product entries, got {flat.shape[-1]}")
    single = flat.ndim == 1
    rows = ad.reshape(flat, (1, flat.shape[0])) if single else flat
    out = ad.matmul(rows, w) + store["fusion.bias"]
    return ad.reshape(out, (w.shape[1],)) if single else out


def fuse(kind, x_l, x_a, x_v, store: ParamStore) -> Value:
    kind = FusionKind.parse(kind)
    if kind is FusionKind.ADDITION:
        return fuse_addition(x_l, x_a, x_v)
    if kind is FusionKind.CONCAT_FC:
        return fuse_concat(x_l, x_a, x_v, store)
    return fuse_tensor(x_l, x_a, x_v, store)
