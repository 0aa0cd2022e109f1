"""Command-line entry point: ``mmfilter {gen-data,train,eval,inspect-masks}``.

Exit codes: 0 success, 1 I/O failure, 2 bad config or data, 3 non-finite loss.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import read_config, synth_config, train_config
from .data import check_dataset, generate_synthetic, load_jsonl, train_val_test_split, utterance_to_json
from .encoders import MODALITIES
from .estimator import MultimodalRegressor
from .exceptions import ConfigError, MMFilterError

MODEL_FILE = "model.bin"
LOG_FILE = "train.log"
MANIFEST_FILE = "manifest.json"


def git_blob_sha1(data: bytes) -> str:
    """Content hash as ``git hash-object`` would compute it."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def write_atomic(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_bytes(obj) -> bytes:
    # NaN metrics become null so the manifest stays valid JSON
    def clean(v):
        if isinstance(v, float) and not np.isfinite(v):
            return None
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, list):
            return [clean(x) for x in v]
        return v

    return (json.dumps(clean(obj), indent=2, sort_keys=True) + "\n").encode("utf-8")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def cmd_gen_data(args) -> int:
    cfg = synth_config(read_config(args.config), seed=args.seed)
    dataset = generate_synthetic(cfg)
    blob = "".join(utterance_to_json(u) + "\n" for u in dataset).encode("utf-8")
    write_atomic(args.out, blob)
    flags = np.array([[u.noise_flags[m] for m in MODALITIES] for u in dataset])
    manifest = {
        "config": dataclasses.asdict(cfg),
        "seed": cfg.seed,
        "n": len(dataset),
        "dataset_sha1": git_blob_sha1(blob),
        "noise_rate": dict(zip(MODALITIES, flags.mean(axis=0).tolist())),
    }
    write_atomic(f"{args.out}.manifest.json", _json_bytes(manifest))
    print(f"wrote {len(dataset)} utterances to {args.out}")
    return 0


def cmd_train(args) -> int:
    started = _now()
    cfg = train_config(read_config(args.config))
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.no_ml:
        overrides["modulation"] = False
    if args.no_mfm:
        overrides["filter_mode"] = "none"
    if args.no_be:
        overrides["baseline"] = False
    cfg = dataclasses.replace(cfg, **overrides)
    raw = Path(args.data).read_bytes()
    dataset = load_jsonl(args.data)
    train, val, test = train_val_test_split(dataset, seed=cfg.seed)
    if not train or not test:
        raise ConfigError(f"dataset of {len(dataset)} utterances is too small to split")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines: list[str] = []

    def log(line):
        lines.append(line)
        print(line)

    est = MultimodalRegressor.from_config(cfg)
    est.fit(train, eval_set=val or None, log=log)
    report = est.evaluate(test)
    keep = {m: float(np.mean(g["keep"])) for m, g in est.filter_decisions(test).items()}

    est.save(out / MODEL_FILE)
    write_atomic(out / LOG_FILE, "".join(line + "\n" for line in lines).encode("utf-8"))
    manifest = {
        "ablation": cfg.ablation,
        "config": dataclasses.asdict(cfg),
        "seed": cfg.seed,
        "dataset": str(args.data),
        "dataset_sha1": git_blob_sha1(raw),
        "split": {"train": len(train), "val": len(val), "test": len(test)},
        "started": started,
        "finished": _now(),
        "test_metrics": report.as_dict(),
        "test_keep": keep,
    }
    write_atomic(out / MANIFEST_FILE, _json_bytes(manifest))
    for line in report.lines():
        print(f"test_{line}")
    return 0


def _load_pair(args):
    est = MultimodalRegressor.load(args.model)
    dataset = load_jsonl(args.data)
    check_dataset(dataset, est.input_dims_)
    return est, dataset


def cmd_eval(args) -> int:
    est, dataset = _load_pair(args)
    for line in est.evaluate(dataset).lines():
        print(line)
    for m, g in est.filter_decisions(dataset).items():
        print(f"keep_{m}={float(np.mean(g['keep'])):.6f}")
    return 0


def cmd_inspect_masks(args) -> int:
    est = MultimodalRegressor.load(args.model)
    if est.config_.filter_mode == "none":
        raise ConfigError("model has no filter")
    dataset = load_jsonl(args.data)
    check_dataset(dataset, est.input_dims_)
    gates = est.filter_decisions(dataset)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["utterance_id", "modality", "keep", "replace", "penalty"])
    for i, u in enumerate(dataset):
        for m in MODALITIES:
            g = gates[m]
            writer.writerow([u.id, m, repr(float(g["keep"][i])), repr(float(g["replace"][i])), repr(float(g["penalty"][i]))])
    write_atomic(args.out, buf.getvalue().encode("utf-8"))
    print("mean_keep " + " ".join(f"{m}={float(np.mean(gates[m]['keep'])):.6f}" for m in MODALITIES))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmfilter", description="Multimodal sentiment regression with modality filtering.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic JSONL dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model; writes model, log and manifest to --out")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--no-ml", action="store_true", help="plain unimodal losses (no modulation)")
    p.add_argument("--no-mfm", action="store_true", help="bypass the modality filter")
    p.add_argument("--no-be", action="store_true", help="replace filtered content with zeros")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="print test metrics as key=value lines")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect-masks", help="export per-utterance filter decisions as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_inspect_masks)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MMFilterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
