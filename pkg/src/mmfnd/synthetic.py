"""Synthetic multilingual corpora and planted class signals for desk-scale checks."""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import numpy as np
from PIL import Image

from .fusion import PATHWAYS
from .training import LabeledBatch

# first consonant .. last consonant of each script block
_SCRIPTS = {
    "hi": (0x0915, 0x0939), "mr": (0x0915, 0x0939), "bn": (0x0995, 0x09B9),
    "pa": (0x0A15, 0x0A39), "gu": (0x0A95, 0x0AB9), "ta": (0x0B95, 0x0BB9),
    "ml": (0x0D15, 0x0D39),
}
SEVEN_LANGUAGES = ("hi", "bn", "mr", "ml", "ta", "gu", "pa")
_NOISE = ("😀", "https://t.co/x1", "www.example.in/a", "\u200b", "  ", "🔥🔥")


def _word(rng: np.random.Generator, lang: str) -> str:
    lo, hi = _SCRIPTS[lang]
    return "".join(chr(int(c)) for c in rng.integers(lo, hi + 1, size=rng.integers(2, 7)))


def synthetic_text(rng: np.random.Generator, lang: str, n_words: int = 12, noisy: bool = True) -> str:
    words = [_word(rng, lang) for _ in range(n_words)]
    if noisy:
        for _ in range(rng.integers(0, 3)):
            words.insert(int(rng.integers(0, len(words) + 1)), _NOISE[rng.integers(len(_NOISE))])
    return " ".join(words)


def make_synthetic_corpus(out_dir: str | Path, n: int = 1000, seed: int = 0,
                          languages: tuple[str, ...] = SEVEN_LANGUAGES, image_px: int = 32,
                          n_without_image: int = 0, with_translation: bool = False) -> Path:
    """Write ``manifest.jsonl`` plus small PNG images; returns the manifest path.

    Labels alternate so both classes appear in every language. The last
    ``n_without_image`` records carry no image reference.
    """
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    lines = []
    for i in range(n):
        lang = languages[i % len(languages)]
        rec = {"id": f"syn-{i:05d}", "language": lang, "text": synthetic_text(rng, lang),
               "label": int((i // len(languages)) % 2), "tags": ["synthetic"]}
        if with_translation:
            rec["text_en"] = f"synthetic english text {i}"
        if i < n - n_without_image:
            ref = f"images/{rec['id']}.png"
            pixels = rng.integers(0, 256, size=(image_px, image_px, 3), dtype=np.uint8)
            img = Image.fromarray(pixels)
            if i % 5 == 4:
                img = img.convert("L")
            img.save(out_dir / ref)
            rec["image_ref"] = ref
        lines.append(json.dumps(rec, ensure_ascii=False))
    path = out_dir / "manifest.jsonl"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def signal_directions(dims: dict[str, int], seed: int) -> dict[str, np.ndarray]:
    rng = np.random.default_rng([seed, 0x5167])
    out = {}
    for p in PATHWAYS:
        u = rng.normal(size=dims[p])
        out[p] = u / np.linalg.norm(u)
    return out


def plant_signal(data: LabeledBatch, strength: float = 0.3, seed: int = 0) -> LabeledBatch:
    """Add ``+/- strength`` along a fixed unit direction per enabled pathway (+ for real)."""
    dirs = signal_directions(data.dims, seed)
    sign = (2.0 * data.labels - 1.0)[:, None]
    feats = {}
    for p in PATHWAYS:
        v = data.features[p]
        feats[p] = v + strength * sign * dirs[p] if data.mask.enabled(p) else v.copy()
    return replace(data, features=feats)
