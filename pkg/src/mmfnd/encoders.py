"""Encoder roles, the backend contract, the stub backends and the encoder hub."""

from __future__ import annotations

import hashlib
import re
import threading
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from . import hashing
from .cache import EmbeddingCache, FeatureCacheKey, cached_encode
from .dataset import IMAGE_SIZE
from .errors import EncoderError, ShapeError

TEXT_INDIC = "text_indic"
TEXT_ENGLISH = "text_english"
IMAGE_PATCH = "image_patch"
IMAGE_CONV = "image_conv"
MULTIMODAL = "multimodal"
CAPTION_GEN = "caption_gen"
CAPTION_TEXT = "caption_text"
ROLES = (TEXT_INDIC, TEXT_ENGLISH, IMAGE_PATCH, IMAGE_CONV, MULTIMODAL, CAPTION_GEN, CAPTION_TEXT)
TEXT_ROLES = (TEXT_INDIC, TEXT_ENGLISH, CAPTION_TEXT)

DEFAULT_N_MAX = 200
IMAGE_SHAPE = (IMAGE_SIZE, IMAGE_SIZE, 3)


@dataclass(frozen=True)
class EncoderBackendDescriptor:
    backend_id: str
    role: str
    output_dim: int
    version: str = "v1"
    deterministic: bool = True
    # backends that cannot serve concurrent calls set this; the hub then serialises them
    exclusive: bool = False

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown encoder role {self.role!r}")
        if self.output_dim <= 0 and self.role != CAPTION_GEN:
            raise ValueError(f"output_dim must be positive, got {self.output_dim}")


@dataclass(frozen=True)
class Embedding:
    values: np.ndarray
    producer: EncoderBackendDescriptor

    def __post_init__(self):
        if self.values.ndim != 1 or self.values.size != self.producer.output_dim:
            raise ShapeError(
                f"{self.producer.backend_id}: expected {self.producer.output_dim} values, "
                f"got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise EncoderError(f"{self.producer.backend_id}: non-finite embedding")

    @property
    def dim(self) -> int:
        return self.values.size


# ---------------------------------------------------------------------------
# tokenisation

@runtime_checkable
class Vocab(Protocol):
    cls_id: int
    sep_id: int
    pad_id: int

    def tokenize(self, text: str) -> list[int]: ...


_WORD_RE = re.compile(r"\w+|[^\w\s]")


@dataclass(frozen=True)
class StubVocab:
    """Hashes each word/punctuation token into a fixed id range (BERT-style specials)."""

    vocab_size: int = 250_000
    pad_id: int = 0
    cls_id: int = 101
    sep_id: int = 102
    first_id: int = 1000

    def tokenize(self, text: str) -> list[int]:
        span = self.vocab_size - self.first_id
        return [self.first_id + hashing.fnv1a64(w.encode("utf-8")) % span
                for w in _WORD_RE.findall(text)]


@dataclass(frozen=True)
class TokenSequence:
    tokens: np.ndarray
    attention_mask: np.ndarray
    n_max: int

    @property
    def length(self) -> int:
        return int(self.attention_mask.sum())

    def canonical_bytes(self) -> bytes:
        return np.ascontiguousarray(self.tokens[: self.length], dtype="<i8").tobytes()


def tokenize_with_specials(text: str, vocab: Vocab, n_max: int = DEFAULT_N_MAX) -> TokenSequence:
    if n_max < 2:
        raise ValueError(f"n_max must be at least 2, got {n_max}")
    # keep the earliest content tokens; specials always survive
    content = vocab.tokenize(text)[: n_max - 2]
    real = [vocab.cls_id, *content, vocab.sep_id]
    tokens = np.full(n_max, vocab.pad_id, dtype=np.int64)
    tokens[: len(real)] = real
    mask = np.zeros(n_max, dtype=np.int8)
    mask[: len(real)] = 1
    return TokenSequence(tokens, mask, n_max)


# ---------------------------------------------------------------------------
# backend contract

class TextBackend(Protocol):
    descriptor: EncoderBackendDescriptor
    vocab: Vocab

    def encode(self, seq: TokenSequence) -> np.ndarray: ...


class ImageBackend(Protocol):
    descriptor: EncoderBackendDescriptor

    def encode(self, img: np.ndarray) -> np.ndarray: ...


class MultimodalBackend(Protocol):
    descriptor: EncoderBackendDescriptor

    def encode(self, text: str, img: np.ndarray) -> np.ndarray: ...


class CaptionBackend(Protocol):
    descriptor: EncoderBackendDescriptor

    def generate(self, img: np.ndarray) -> str: ...


def check_image(img: np.ndarray) -> np.ndarray:
    if img is None:
        raise EncoderError("image input missing")
    img = np.asarray(img)
    if img.shape != IMAGE_SHAPE:
        raise ShapeError(f"expected image of shape {IMAGE_SHAPE}, got {img.shape}")
    return np.ascontiguousarray(img, dtype=np.float32)


def canonical_image_bytes(img: np.ndarray) -> bytes:
    return np.ascontiguousarray(img, dtype="<f4").tobytes()


# ---------------------------------------------------------------------------
# stub backends

@dataclass
class StubTextEncoder:
    descriptor: EncoderBackendDescriptor
    vocab: Vocab = field(default_factory=StubVocab)

    def encode(self, seq: TokenSequence) -> np.ndarray:
        return hashing.stub_matrix(self.descriptor.backend_id, seq.canonical_bytes(),
                                   rows=seq.n_max, dim=self.descriptor.output_dim)

    def encode_cls(self, seq: TokenSequence) -> np.ndarray:
        # row 0 of encode(), without drawing the full matrix
        return hashing.stub_vector(self.descriptor.backend_id, seq.canonical_bytes(),
                                   dim=self.descriptor.output_dim)


@dataclass
class StubImageEncoder:
    descriptor: EncoderBackendDescriptor

    def encode(self, img: np.ndarray) -> np.ndarray:
        return hashing.stub_vector(self.descriptor.backend_id, canonical_image_bytes(img),
                                   dim=self.descriptor.output_dim)


@dataclass
class StubMultimodalEncoder:
    descriptor: EncoderBackendDescriptor

    def encode(self, text: str, img: np.ndarray) -> np.ndarray:
        return hashing.stub_vector(self.descriptor.backend_id, text.encode("utf-8"),
                                   canonical_image_bytes(img), dim=self.descriptor.output_dim)


@dataclass
class StubCaptioner:
    descriptor: EncoderBackendDescriptor

    def generate(self, img: np.ndarray) -> str:
        digest = hashlib.sha256(canonical_image_bytes(img)).hexdigest()
        return f"stub caption {digest[:8]}"


STUB_DIMS = {TEXT_INDIC: 768, TEXT_ENGLISH: 768, IMAGE_PATCH: 768, IMAGE_CONV: 1024,
             MULTIMODAL: 768, CAPTION_GEN: 1, CAPTION_TEXT: 768}


def stub_backend(role: str, dim: int | None = None):
    descriptor = EncoderBackendDescriptor(
        backend_id=f"stub-{role.replace('_', '-')}", role=role,
        output_dim=dim if dim is not None else STUB_DIMS[role], version="v1")
    if role in TEXT_ROLES:
        return StubTextEncoder(descriptor)
    if role in (IMAGE_PATCH, IMAGE_CONV):
        return StubImageEncoder(descriptor)
    if role == MULTIMODAL:
        return StubMultimodalEncoder(descriptor)
    return StubCaptioner(descriptor)


def stub_backends(dims: dict[str, int] | None = None) -> dict[str, object]:
    dims = dims or {}
    return {role: stub_backend(role, dims.get(role)) for role in ROLES}


# ---------------------------------------------------------------------------
# encoder operations

def _require_role(backend, *roles: str):
    role = backend.descriptor.role
    if role not in roles:
        raise EncoderError(f"backend {backend.descriptor.backend_id} has role {role!r}, "
                           f"expected one of {roles}")


def encode_text(seq: TokenSequence, backend: TextBackend,
                role: str | None = None) -> tuple[np.ndarray, Embedding]:
    """Full last-hidden-state matrix and the class-token (row 0) embedding."""
    _require_role(backend, *((role,) if role else TEXT_ROLES))
    matrix = np.asarray(backend.encode(seq), dtype=np.float32)
    expected = (seq.n_max, backend.descriptor.output_dim)
    if matrix.shape != expected:
        raise ShapeError(f"{backend.descriptor.backend_id}: expected {expected}, got {matrix.shape}")
    return matrix, Embedding(matrix[0].copy(), backend.descriptor)


def text_cls(seq: TokenSequence, backend: TextBackend) -> np.ndarray:
    encode_cls = getattr(backend, "encode_cls", None)
    if encode_cls is not None:
        return np.asarray(encode_cls(seq), dtype=np.float32)
    return encode_text(seq, backend)[1].values


def _encode_image(img: np.ndarray, backend: ImageBackend, role: str) -> Embedding:
    _require_role(backend, role)
    img = check_image(img)
    return Embedding(np.asarray(backend.encode(img), dtype=np.float32), backend.descriptor)


def encode_image_patch(img: np.ndarray, backend: ImageBackend) -> Embedding:
    return _encode_image(img, backend, IMAGE_PATCH)


def encode_image_conv(img: np.ndarray, backend: ImageBackend) -> Embedding:
    return _encode_image(img, backend, IMAGE_CONV)


def encode_multimodal(text_en: str | None, img: np.ndarray | None,
                      backend: MultimodalBackend) -> Embedding:
    _require_role(backend, MULTIMODAL)
    if text_en is None or img is None:
        missing = "text" if text_en is None else "image"
        raise EncoderError(f"multimodal pathway needs both modalities; {missing} missing")
    img = check_image(img)
    return Embedding(np.asarray(backend.encode(text_en, img), dtype=np.float32), backend.descriptor)


def generate_caption(img: np.ndarray, backend: CaptionBackend, article_id: str | None = None) -> str:
    _require_role(backend, CAPTION_GEN)
    img = check_image(img)
    try:
        caption = backend.generate(img)
    except Exception as exc:
        where = f" for article {article_id}" if article_id else ""
        raise EncoderError(f"caption generation failed{where}: {exc}") from exc
    if not caption:
        raise EncoderError(f"empty caption{' for article ' + article_id if article_id else ''}")
    return caption


def encode_caption(img: np.ndarray, caption_gen: CaptionBackend, caption_text: TextBackend,
                   n_max: int = DEFAULT_N_MAX, article_id: str | None = None) -> Embedding:
    caption = generate_caption(img, caption_gen, article_id)
    seq = tokenize_with_specials(caption, caption_text.vocab, n_max)
    return encode_text(seq, caption_text, CAPTION_TEXT)[1]


# ---------------------------------------------------------------------------
# hub

class EncoderHub:
    """One backend per role, an optional embedding cache, and per-backend locks.

    All ``*_cls``/``*_vector`` methods return float32 arrays and go through
    the cache when one is configured.
    """

    def __init__(self, backends: dict[str, object] | None = None,
                 cache: EmbeddingCache | None = None, n_max: int = DEFAULT_N_MAX):
        backends = dict(backends or stub_backends())
        missing = [r for r in ROLES if r not in backends]
        if missing:
            raise EncoderError(f"no backend assigned for roles: {', '.join(missing)}")
        for role, backend in backends.items():
            _require_role(backend, role)
        self.backends = backends
        self.cache = cache
        self.n_max = n_max
        self._locks = {role: threading.Lock() for role in ROLES}

    def descriptor(self, role: str) -> EncoderBackendDescriptor:
        return self.backends[role].descriptor

    def dim(self, role: str) -> int:
        return self.descriptor(role).output_dim

    def _call(self, role: str, fn, *args):
        if self.descriptor(role).exclusive:
            with self._locks[role]:
                return fn(*args)
        return fn(*args)

    def _cached(self, role: str, chunks: tuple[bytes, ...], compute) -> np.ndarray:
        d = self.descriptor(role)
        if self.cache is None or not d.deterministic:
            values = np.asarray(compute(), dtype=np.float32)
        else:
            key = FeatureCacheKey.for_bytes(d.backend_id, d.version, *chunks)
            values = cached_encode(key, compute, self.cache)
        Embedding(values, d)  # validates shape and finiteness
        return values

    def text_cls(self, text: str, role: str) -> np.ndarray:
        backend = self.backends[role]
        seq = tokenize_with_specials(text, backend.vocab, self.n_max)
        return self._cached(role, (seq.canonical_bytes(),),
                            lambda: self._call(role, text_cls, seq, backend))

    def image_vector(self, img: np.ndarray, role: str) -> np.ndarray:
        img = check_image(img)
        backend = self.backends[role]
        return self._cached(role, (canonical_image_bytes(img),),
                            lambda: self._call(role, backend.encode, img))

    def multimodal_vector(self, text_en: str, img: np.ndarray) -> np.ndarray:
        img = check_image(img)
        backend = self.backends[MULTIMODAL]
        return self._cached(MULTIMODAL, (text_en.encode("utf-8"), b"\x1f", canonical_image_bytes(img)),
                            lambda: self._call(MULTIMODAL, backend.encode, text_en, img))

    def caption(self, img: np.ndarray, article_id: str | None = None) -> str:
        return self._call(CAPTION_GEN, generate_caption, img, self.backends[CAPTION_GEN], article_id)

    def caption_vector(self, img: np.ndarray, article_id: str | None = None) -> np.ndarray:
        return self.text_cls(self.caption(img, article_id), CAPTION_TEXT)

    def describe(self) -> dict[str, dict]:
        return {role: {"backend_id": b.descriptor.backend_id, "version": b.descriptor.version,
                       "output_dim": b.descriptor.output_dim}
                for role, b in self.backends.items()}
