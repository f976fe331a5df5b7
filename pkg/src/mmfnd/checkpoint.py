"""Single-file checkpoint format.

::

    b"MMFNDCK1" | uint64 LE header length | UTF-8 JSON header | payload

The JSON header echoes the run configuration and lists every parameter block
(name, shape, byte offset). The payload is the concatenation of those blocks
as little-endian float32. A SHA-256 of the payload guards against truncation.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import CheckpointError, ShapeError
from .fusion import PATHWAYS, ClassifierParams, PathwayMask

MAGIC = b"MMFNDCK1"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    params: ClassifierParams
    mask: PathwayMask
    threshold: float = 0.5
    seed: int = 0
    epoch: int = 0
    metrics: dict[str, float] = field(default_factory=dict)
    extra: dict[str, Any] = field(default_factory=dict)

    def config_echo(self) -> dict:
        return {**self.params.config(), "mask": self.mask.to_json(),
                "threshold": self.threshold, "seed": self.seed}


def as_float32_params(params: ClassifierParams) -> ClassifierParams:
    """Round every block to float32 so the stored file reproduces it exactly."""
    out = params.copy()
    out.arrays = {k: v.astype(np.float32).astype(np.float64) for k, v in params.arrays.items()}
    return out


def to_bytes(ckpt: Checkpoint) -> bytes:
    blocks, manifest, offset = [], [], 0
    for name, shape in ckpt.params.expected_shapes().items():
        raw = np.ascontiguousarray(ckpt.params.arrays[name], dtype="<f4").tobytes()
        manifest.append({"name": name, "shape": list(shape), "offset": offset, "nbytes": len(raw)})
        blocks.append(raw)
        offset += len(raw)
    payload = b"".join(blocks)
    header = {
        "format_version": FORMAT_VERSION,
        "config": ckpt.config_echo(),
        "epoch": ckpt.epoch,
        "metrics": ckpt.metrics,
        "extra": ckpt.extra,
        "blocks": manifest,
        "payload_bytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(head)) + head + payload


def save_checkpoint(ckpt: Checkpoint, path: str | os.PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(to_bytes(ckpt))
    os.replace(tmp, path)
    return path


def from_bytes(blob: bytes, expect: Mapping[str, Any] | None = None) -> Checkpoint:
    if len(blob) < len(MAGIC) + 8 or not blob.startswith(MAGIC):
        raise CheckpointError("corrupt checkpoint: bad magic or truncated header")
    (head_len,) = struct.unpack_from("<Q", blob, len(MAGIC))
    start = len(MAGIC) + 8
    try:
        header = json.loads(blob[start:start + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError("corrupt checkpoint: unreadable header") from exc
    payload = blob[start + head_len:]
    if len(payload) != header.get("payload_bytes") or \
            hashlib.sha256(payload).hexdigest() != header.get("payload_sha256"):
        raise CheckpointError("corrupt checkpoint: payload truncated or damaged")
    cfg = header["config"]
    if expect:
        _check_expected(cfg, expect)
    arrays = {}
    for block in header["blocks"]:
        raw = payload[block["offset"]:block["offset"] + block["nbytes"]]
        arrays[block["name"]] = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(block["shape"])
    try:
        params = ClassifierParams(dims=dict(cfg["dims"]), P=cfg["P"], H=cfg["H"],
                                  n_hidden=cfg["n_hidden"], dropout=cfg["dropout"], arrays=arrays)
    except ShapeError as exc:
        raise CheckpointError(f"checkpoint does not match its own config: {exc}") from exc
    missing = set(params.expected_shapes()) - set(arrays)
    if missing:
        raise CheckpointError(f"corrupt checkpoint: missing blocks {sorted(missing)}")
    return Checkpoint(params, PathwayMask.from_json(cfg["mask"]), cfg["threshold"], cfg["seed"],
                      header["epoch"], header.get("metrics", {}), header.get("extra", {}))


def _check_expected(cfg: Mapping[str, Any], expect: Mapping[str, Any]) -> None:
    dims = dict(cfg["dims"])
    want_dims = dict(expect.get("dims", dims))
    want_p = expect.get("P", cfg["P"])
    for pathway in sorted(want_dims, key=lambda q: PATHWAYS.index(q) if q in PATHWAYS else len(PATHWAYS)):
        want = (want_dims[pathway], want_p)
        found = (dims.get(pathway), cfg["P"])
        if want != found:
            raise CheckpointError(f"config mismatch: proj.{pathway}.W expected shape {want}, "
                                  f"found {found}")
    for key in ("H", "n_hidden"):
        if key in expect and expect[key] != cfg[key]:
            raise CheckpointError(f"config mismatch: expected {key}={expect[key]}, found {key}={cfg[key]}")


def load_checkpoint(path: str | os.PathLike, expect: Mapping[str, Any] | None = None) -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError as exc:
        raise CheckpointError(f"checkpoint not found: {path}") from exc
    return from_bytes(blob, expect)
