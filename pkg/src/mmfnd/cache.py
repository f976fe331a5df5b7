"""Content-addressed on-disk store for embedding vectors.

Layout: ``<root>/<backend_id>/<version>/<sha256 hex>.vec``. Each record is a
16-byte header (magic, dim, dtype code, endianness code; all little-endian
uint32 after the magic) followed by ``dim`` little-endian float32 values.
"""

from __future__ import annotations

import hashlib
import logging
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)

MAGIC = b"MMFV"
DTYPE_FLOAT32 = 1
LITTLE_ENDIAN = 1
_HEADER = struct.Struct("<4sIII")
CACHE_ENV = "MMFND_CACHE_DIR"


@dataclass(frozen=True)
class FeatureCacheKey:
    content_hash: str
    backend_id: str
    version: str

    @classmethod
    def for_bytes(cls, backend_id: str, version: str, *chunks: bytes) -> "FeatureCacheKey":
        h = hashlib.sha256()
        for chunk in chunks:
            h.update(chunk)
        return cls(h.hexdigest(), backend_id, version)


class CorruptRecord(Exception):
    pass


def encode_record(values: np.ndarray) -> bytes:
    values = np.ascontiguousarray(values, dtype="<f4")
    return _HEADER.pack(MAGIC, values.size, DTYPE_FLOAT32, LITTLE_ENDIAN) + values.tobytes()


def decode_record(blob: bytes) -> np.ndarray:
    if len(blob) < _HEADER.size:
        raise CorruptRecord("short header")
    magic, dim, dtype, endian = _HEADER.unpack_from(blob)
    if magic != MAGIC or dtype != DTYPE_FLOAT32 or endian != LITTLE_ENDIAN:
        raise CorruptRecord("bad header")
    if dim == 0 or len(blob) != _HEADER.size + 4 * dim:
        raise CorruptRecord(f"payload length {len(blob) - _HEADER.size} does not match dim {dim}")
    values = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).astype(np.float32)
    if not np.all(np.isfinite(values)):
        raise CorruptRecord("non-finite payload")
    return values


class EmbeddingCache:
    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)

    @classmethod
    def from_env(cls, default: str | os.PathLike) -> "EmbeddingCache":
        return cls(os.environ.get(CACHE_ENV) or default)

    def path_for(self, key: FeatureCacheKey) -> Path:
        return self.root / key.backend_id / key.version / f"{key.content_hash}.vec"

    def get(self, key: FeatureCacheKey) -> np.ndarray | None:
        """Stored vector, or None on a miss. Corrupt records raise :class:`CorruptRecord`."""
        try:
            blob = self.path_for(key).read_bytes()
        except FileNotFoundError:
            return None
        return decode_record(blob)

    def put(self, key: FeatureCacheKey, values: np.ndarray) -> None:
        path = self.path_for(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        # write-then-rename so concurrent writers never expose a partial record
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".vec")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(encode_record(values))
            os.replace(tmp, path)
        except BaseException:
            try:
                os.unlink(tmp)
            except FileNotFoundError:
                pass
            raise


def cached_encode(key: FeatureCacheKey, compute: Callable[[], np.ndarray],
                  cache: EmbeddingCache | None) -> np.ndarray:
    if cache is None:
        return np.asarray(compute(), dtype=np.float32)
    try:
        hit = cache.get(key)
    except CorruptRecord as exc:
        logger.warning("corrupt cache record %s (%s); recomputing", cache.path_for(key), exc)
        hit = None
    if hit is not None:
        return hit
    values = np.asarray(compute(), dtype=np.float32)
    cache.put(key, values)
    return values
