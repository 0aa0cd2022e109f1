"""Single-file model container.

Layout::

    uint64 little-endian  N = header length in bytes
    N bytes               UTF-8 JSON header
    payload               little-endian float32 tensors, back to back

The header records the training config, the input feature dims and, for each
tensor, its name, shape, byte offset into the payload and dtype tag ``<f4``.
Values are held as float64 in memory and rounded to float32 on save.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .autodiff import ParamStore
from .encoders import MODALITIES
from .exceptions import ConfigError, ModelFileError
from .model import TrainConfig, build_params

FORMAT = "mmfilter-model"
VERSION = 1
DTYPE = "<f4"


def _header_bytes(store: ParamStore, cfg: TrainConfig, input_dims: dict) -> tuple[bytes, list[np.ndarray]]:
    tensors, chunks, offset = [], [], 0
    for name, value in store.items():
        arr = np.ascontiguousarray(value.data, dtype=DTYPE)
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset, "dtype": DTYPE})
        chunks.append(arr)
        offset += arr.nbytes
    header = {
        "format": FORMAT,
        "version": VERSION,
        "config": asdict(cfg),
        "input_dims": {m: int(input_dims[m]) for m in MODALITIES},
        "tensors": tensors,
    }
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8"), chunks


def dumps(store: ParamStore, cfg: TrainConfig, input_dims: dict) -> bytes:
    header, chunks = _header_bytes(store, cfg, input_dims)
    return struct.pack("<Q", len(header)) + header + b"".join(c.tobytes() for c in chunks)


def save_model(path, store: ParamStore, cfg: TrainConfig, input_dims: dict) -> None:
    """Write atomically: temp file in the target directory, then rename."""
    path = Path(path)
    blob = dumps(store, cfg, input_dims)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def loads(blob: bytes) -> tuple[ParamStore, TrainConfig, dict]:
    if len(blob) < 8:
        raise ModelFileError("model file truncated before header length")
    (n,) = struct.unpack("<Q", blob[:8])
    if 8 + n > len(blob):
        raise ModelFileError("model file truncated inside header")
    try:
        header = json.loads(blob[8 : 8 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"unreadable model header: {exc}") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT or header.get("version") != VERSION:
        raise ModelFileError(f"not a {FORMAT} v{VERSION} file")
    try:
        cfg = TrainConfig(**header["config"])
        input_dims = {m: int(header["input_dims"][m]) for m in MODALITIES}
        expected = build_params(cfg, input_dims)
        entries = {t["name"]: t for t in header["tensors"]}
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"bad model header: {exc!r}") from None
    if len(entries) != len(header["tensors"]):
        raise ModelFileError("duplicate tensor names in model file")
    unknown = sorted(set(entries) - set(expected))
    missing = sorted(set(expected) - set(entries))
    if unknown or missing:
        raise ModelFileError(f"tensor set mismatch: unknown={unknown} missing={missing}")

    payload = memoryview(blob)[8 + n :]
    store = ParamStore()
    for name in expected:
        t = entries[name]
        shape = tuple(t["shape"])
        if t.get("dtype") != DTYPE or shape != expected[name].shape:
            raise ModelFileError(f"{name}: expected {DTYPE} {expected[name].shape}, got {t.get('dtype')} {shape}")
        count = int(np.prod(shape, dtype=np.int64))
        end = t["offset"] + 4 * count
        if end > len(payload):
            raise ModelFileError(f"{name}: payload truncated")
        arr = np.frombuffer(payload[t["offset"] : end], dtype=DTYPE).reshape(shape)
        store.add(name, arr.astype(np.float64))
    return store, cfg, input_dims


def load_model(path) -> tuple[ParamStore, TrainConfig, dict]:
    with open(path, "rb") as fh:
        return loads(fh.read())
