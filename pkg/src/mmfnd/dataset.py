"""Manifest ingestion, text/image preprocessing, translation and splitting."""

from __future__ import annotations

import functools
import io
import json
import logging
import math
import re
import unicodedata
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageDecodeError, ManifestError, TranslationError

logger = logging.getLogger(__name__)

LANGUAGES = ("hi", "bn", "mr", "ml", "ta", "gu", "pa", "other")
IMAGE_SIZE = 224
SCHEMA_VERSION = 1

FAKE, REAL = 0, 1


@dataclass(frozen=True)
class NewsArticle:
    id: str
    language: str
    text: str
    label: int
    text_en: str | None = None
    image_ref: str | None = None
    source_url: str | None = None
    published_at: str | None = None
    tags: tuple[str, ...] = ()
    # name of the translator that produced text_en; None when supplied upstream
    translator: str | None = None

    def to_json(self) -> dict:
        d = asdict(self)
        d["tags"] = list(self.tags)
        return {k: v for k, v in d.items() if v is not None}


@dataclass
class DatasetManifest:
    records: list[NewsArticle]
    root_dir: Path
    schema_version: int = SCHEMA_VERSION

    def __len__(self) -> int:
        return len(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def by_id(self) -> dict[str, NewsArticle]:
        return {r.id: r for r in self.records}

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec.to_json(), ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class DatasetSplit:
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    seed: int
    ratio: float

    def to_json(self) -> dict:
        return {"seed": self.seed, "ratio": self.ratio,
                "train_ids": list(self.train_ids), "test_ids": list(self.test_ids)}


@dataclass
class DatasetStats:
    per_language: dict[str, dict[str, int]]
    real: int
    fake: int

    @property
    def total(self) -> int:
        return self.real + self.fake

    def to_json(self) -> dict:
        return {"per_language": self.per_language,
                "totals": {"real": self.real, "fake": self.fake, "total": self.total}}


# ---------------------------------------------------------------------------
# manifest

_FIELDS = {"id", "language", "text", "label", "text_en", "image_ref",
           "source_url", "published_at", "tags", "translator"}


def _parse_record(obj: dict, lineno: int) -> NewsArticle:
    if not isinstance(obj, dict):
        raise ManifestError(f"line {lineno}: expected a JSON object")
    for key in ("id", "language", "text", "label"):
        if key not in obj:
            raise ManifestError(f"line {lineno}: missing field '{key}'")
    label = obj["label"]
    if isinstance(label, bool) or label not in (0, 1):
        raise ManifestError(f"line {lineno}: label must be 0 or 1, got {label!r}")
    if obj["language"] not in LANGUAGES:
        raise ManifestError(f"line {lineno}: unknown language {obj['language']!r}")
    kwargs = {k: v for k, v in obj.items() if k in _FIELDS}
    kwargs["id"] = str(obj["id"])
    kwargs["label"] = int(label)
    kwargs["tags"] = tuple(obj.get("tags") or ())
    return NewsArticle(**kwargs)


def load_manifest(path: str | Path, root_dir: str | Path | None = None) -> DatasetManifest:
    """Parse a JSON Lines manifest.

    Image references resolve against ``root_dir``, which defaults to the
    manifest's directory. Unknown keys are ignored.
    """
    path = Path(path)
    records: list[NewsArticle] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
            rec = _parse_record(obj, lineno)
            if rec.id in seen:
                raise ManifestError(f"line {lineno}: duplicate id {rec.id!r}")
            seen.add(rec.id)
            records.append(rec)
    if not records:
        raise ManifestError("empty manifest")
    return DatasetManifest(records, Path(root_dir) if root_dir is not None else path.parent)


# ---------------------------------------------------------------------------
# text cleaning

_URL_RE = re.compile(r"(?:https?://|www\.)\S*", re.IGNORECASE)

# emoji / pictograph blocks, plus the joiners and selectors used to compose them
_EMOJI_RANGES = (
    (0x1F000, 0x1FAFF),  # mahjong .. symbols & pictographs extended-A
    (0x2600, 0x27BF),    # misc symbols, dingbats
    (0x2300, 0x23FF),    # misc technical (watch, hourglass, media controls)
    (0x2B00, 0x2BFF),    # misc symbols and arrows (star, circles)
    (0x2190, 0x21FF),    # arrows
    (0x3030, 0x3030), (0x303D, 0x303D), (0x3297, 0x3297), (0x3299, 0x3299),
    (0x00A9, 0x00A9), (0x00AE, 0x00AE), (0x203C, 0x203C), (0x2049, 0x2049),
    (0x2122, 0x2122), (0x2139, 0x2139), (0x24C2, 0x24C2),
    (0x25AA, 0x25FE),    # geometric shapes used as emoji
    (0x20E3, 0x20E3),    # combining enclosing keycap
    (0xFE00, 0xFE0F),    # variation selectors
    (0x200D, 0x200D),    # zero-width joiner
    (0xE0000, 0xE007F),  # tag characters
)


def is_emoji(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _EMOJI_RANGES)


@functools.lru_cache(maxsize=65536)
def _keep(ch: str) -> bool:
    if ch in "\t\n\r\v\f":
        return True
    if unicodedata.category(ch) in ("Cc", "Cf", "Co", "Cs"):
        return False
    return not is_emoji(ch)


def clean_text(raw: str) -> str:
    # character filtering runs before URL removal so that stripping an emoji can
    # never splice a new URL together; this is what keeps the function idempotent
    text = "".join(ch for ch in raw if _keep(ch))
    text = _URL_RE.sub("", text)
    return " ".join(text.split())


# ---------------------------------------------------------------------------
# images

def preprocess_image_uint8(image_bytes: bytes, article_id: str | None = None) -> np.ndarray:
    """Decode, replicate grayscale to RGB and bilinearly resize; uint8 ``(224, 224, 3)``."""
    try:
        with Image.open(io.BytesIO(image_bytes)) as im:
            im.load()
            if im.mode in ("L", "1", "I", "I;16", "F"):
                # replicate the single channel before resizing
                im = im.convert("L").convert("RGB")
            else:
                im = im.convert("RGB")
    except (UnidentifiedImageError, OSError, ValueError, SyntaxError) as exc:
        raise ImageDecodeError(article_id=article_id) from exc
    if im.size != (IMAGE_SIZE, IMAGE_SIZE):
        im = im.resize((IMAGE_SIZE, IMAGE_SIZE), Image.Resampling.BILINEAR)
    return np.asarray(im, dtype=np.uint8)


def to_tensor(pixels: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(pixels.astype(np.float32) / np.float32(255.0))


def preprocess_image(image_bytes: bytes, article_id: str | None = None) -> np.ndarray:
    """Float32 ``(224, 224, 3)`` tensor with values in [0, 1]."""
    return to_tensor(preprocess_image_uint8(image_bytes, article_id))


def load_article_image(article: NewsArticle, root_dir: str | Path) -> np.ndarray:
    if article.image_ref is None:
        raise ImageDecodeError("article has no image", article.id)
    try:
        data = (Path(root_dir) / article.image_ref).read_bytes()
    except OSError as exc:
        raise ImageDecodeError(f"cannot read {article.image_ref}", article.id) from exc
    return preprocess_image(data, article.id)


def _decodable(path: Path) -> bool:
    try:
        with Image.open(path) as im:
            im.load()
        return True
    except (OSError, ValueError, SyntaxError, UnidentifiedImageError):
        return False


def exclude_incomplete(manifest: DatasetManifest) -> tuple[DatasetManifest, list[str]]:
    kept, dropped = [], []
    for rec in manifest.records:
        if rec.image_ref and _decodable(manifest.root_dir / rec.image_ref):
            kept.append(rec)
        else:
            dropped.append(rec.id)
    if dropped:
        logger.info("dropped %d of %d records without a decodable image", len(dropped), len(manifest))
    return DatasetManifest(kept, manifest.root_dir, manifest.schema_version), dropped


# ---------------------------------------------------------------------------
# translation

class Translator(Protocol):
    name: str

    def translate(self, text: str, source_language: str) -> str: ...


class IdentityTranslator:
    name = "identity"

    def translate(self, text: str, source_language: str) -> str:
        return text


@dataclass
class LookupTranslator:
    """Table-driven translator.

    Whole strings found in ``table`` are replaced outright; otherwise each
    whitespace token is looked up and unknown tokens pass through.
    """

    table: dict[str, str] = field(default_factory=dict)
    name: str = "lookup"

    def translate(self, text: str, source_language: str) -> str:
        if text in self.table:
            return self.table[text]
        return " ".join(self.table.get(tok, tok) for tok in text.split())


def translate_article(article: NewsArticle, translator: Translator) -> NewsArticle:
    if article.text_en is not None:
        return article
    try:
        english = translator.translate(clean_text(article.text), article.language)
    except Exception as exc:
        raise TranslationError(article.id, exc) from exc
    return replace(article, text_en=english, translator=translator.name)


def clean_article(article: NewsArticle) -> NewsArticle:
    text_en = clean_text(article.text_en) if article.text_en is not None else None
    return replace(article, text=clean_text(article.text), text_en=text_en)


# ---------------------------------------------------------------------------
# splits and statistics

def train_size(n: int, ratio: float) -> int:
    # half-up rounding
    return int(math.floor(ratio * n + 0.5))


def split_dataset(manifest: DatasetManifest | Iterable[str], ratio: float = 0.8,
                  seed: int = 42) -> DatasetSplit:
    ids = manifest.ids if isinstance(manifest, DatasetManifest) else list(manifest)
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    if len(ids) < 2:
        raise ValueError(f"need at least 2 records to split, got {len(ids)}")
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    order = np.random.Generator(np.random.PCG64(seed)).permutation(len(ids))
    k = train_size(len(ids), ratio)
    shuffled = [ids[i] for i in order]
    return DatasetSplit(tuple(shuffled[:k]), tuple(shuffled[k:]), seed, ratio)


def compute_stats(manifest: DatasetManifest | Iterable[NewsArticle]) -> DatasetStats:
    records = manifest.records if isinstance(manifest, DatasetManifest) else list(manifest)
    per_language = {lang: {"real": 0, "fake": 0} for lang in LANGUAGES}
    for rec in records:
        per_language[rec.language]["real" if rec.label == REAL else "fake"] += 1
    real = sum(v["real"] for v in per_language.values())
    fake = sum(v["fake"] for v in per_language.values())
    return DatasetStats(per_language, real, fake)
