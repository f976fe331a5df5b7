"""FNV-1a / SplitMix64 primitives behind the deterministic stub encoders.

The reference algorithm: seed the generator with the 64-bit FNV-1a hash of
``backend_id || 0x1F || canonical input bytes``, draw one SplitMix64 output per
component, map it to ``((x >> 11) * 2**-52) * 2 - 1`` and L2-normalise.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
SEPARATOR = b"\x1f"

_MASK64 = 0xFFFFFFFFFFFFFFFF


@njit(cache=True)
def _fnv1a_kernel(h, data):
    prime = np.uint64(FNV_PRIME)
    for i in range(data.shape[0]):
        h = (h ^ np.uint64(data[i])) * prime
    return h


def fnv1a64(*chunks: bytes | memoryview, state: int = FNV_OFFSET) -> int:
    """FNV-1a over the concatenation of ``chunks`` without materialising it."""
    h = np.uint64(state)
    for chunk in chunks:
        buf = np.frombuffer(chunk, dtype=np.uint8)
        if buf.size:
            h = np.uint64(_fnv1a_kernel(h, buf))
    return int(h)


def splitmix64(seed: int, n: int) -> np.ndarray:
    """First ``n`` outputs of SplitMix64 started from ``seed`` (uint64 array)."""
    with np.errstate(over="ignore"):
        z = np.uint64(seed & _MASK64) + np.uint64(GOLDEN_GAMMA) * np.arange(1, n + 1, dtype=np.uint64)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def unit_components(words: np.ndarray) -> np.ndarray:
    # every step is exact in float64
    return (words >> np.uint64(11)).astype(np.float64) * (2.0 ** -52) * 2.0 - 1.0


def l2_normalize(v: np.ndarray) -> np.ndarray:
    # fsum gives a correctly rounded norm, independent of summation order
    norm = math.sqrt(math.fsum((v * v).tolist()))
    return v / norm


def stub_vector(backend_id: str, *payload: bytes, dim: int) -> np.ndarray:
    seed = fnv1a64(backend_id.encode("utf-8"), SEPARATOR, *payload)
    return l2_normalize(unit_components(splitmix64(seed, dim))).astype(np.float32)


def stub_matrix(backend_id: str, *payload: bytes, rows: int, dim: int) -> np.ndarray:
    """``rows`` x ``dim`` block drawn from one stream; row 0 equals :func:`stub_vector`."""
    seed = fnv1a64(backend_id.encode("utf-8"), SEPARATOR, *payload)
    block = unit_components(splitmix64(seed, rows * dim)).reshape(rows, dim)
    out = np.empty((rows, dim), dtype=np.float32)
    for r in range(rows):
        out[r] = l2_normalize(block[r])
    return out
