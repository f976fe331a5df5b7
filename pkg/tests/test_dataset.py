import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from mmfnd.dataset import (DatasetManifest, IdentityTranslator, LookupTranslator, NewsArticle, clean_text,
                           compute_stats, exclude_incomplete, load_manifest, preprocess_image,
                           split_dataset, train_size, translate_article)
from mmfnd.errors import ImageDecodeError, ManifestError, TranslationError

from golden_clean import GOLDEN


def _write_manifest(path, rows):
    path.write_text("\n".join(r if isinstance(r, str) else json.dumps(r, ensure_ascii=False) for r in rows)
                    + "\n", encoding="utf-8")
    return path


def _png(size=(8, 8), mode="RGB"):
    buf = io.BytesIO()
    Image.new(mode, size, color=128 if mode == "L" else (10, 20, 30)).save(buf, format="PNG")
    return buf.getvalue()


# --- manifest -----------------------------------------------------------------

def test_manifest_roundtrip(tmp_path):
    rows = [{"id": "a", "language": "hi", "text": "x", "label": 0, "image_ref": "a.png"},
            {"id": "b", "language": "ta", "text": "y", "label": 1, "extra": "ignored"}]
    m = load_manifest(_write_manifest(tmp_path / "m.jsonl", rows))
    assert m.ids == ["a", "b"]
    assert m.root_dir == tmp_path
    m.write(tmp_path / "again.jsonl")
    assert load_manifest(tmp_path / "again.jsonl").records == m.records


@pytest.mark.parametrize("rows, needle", [
    (['{"id": "a", "language": "hi", "text": "x", "label": 0}', "{not json"], "line 2"),
    ([{"id": "a", "language": "hi", "text": "x"}], "missing field 'label'"),
    ([{"id": "a", "language": "hi", "text": "x", "label": 2}], "label must be 0 or 1"),
    ([{"id": "a", "language": "xx", "text": "x", "label": 0}], "unknown language"),
    ([{"id": "a", "language": "hi", "text": "x", "label": 0},
      {"id": "a", "language": "hi", "text": "y", "label": 1}], "duplicate id"),
    ([""], "empty manifest"),
])
def test_manifest_errors(tmp_path, rows, needle):
    with pytest.raises(ManifestError, match=needle):
        load_manifest(_write_manifest(tmp_path / "m.jsonl", rows))


# --- text cleaning ------------------------------------------------------------

@pytest.mark.parametrize("raw, expected", GOLDEN)
def test_clean_text_golden(raw, expected):
    assert clean_text(raw) == expected


def test_golden_corpus_size():
    assert len(GOLDEN) == 20


@settings(max_examples=300, deadline=None)
@given(st.text())
def test_clean_text_idempotent(s):
    once = clean_text(s)
    assert clean_text(once) == once


def test_clean_text_url_glued_by_emoji():
    # removing the emoji must not leave a URL behind
    assert "http" not in clean_text("ht\U0001F600tp://x.y")


# --- images -------------------------------------------------------------------

def test_preprocess_landscape():
    rgb = np.random.default_rng(0).integers(0, 256, size=(480, 640, 3), dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(rgb).save(buf, format="PNG")
    t = preprocess_image(buf.getvalue())
    assert t.shape == (224, 224, 3) and t.dtype == np.float32
    assert 0.0 <= t.min() and t.max() <= 1.0


def test_preprocess_grayscale_replicates_channels():
    t = preprocess_image(_png((100, 100), "L"))
    assert t.shape == (224, 224, 3)
    assert np.array_equal(t[..., 0], t[..., 1]) and np.array_equal(t[..., 1], t[..., 2])
    assert np.allclose(t, 128 / 255)


def test_preprocess_corrupt():
    with pytest.raises(ImageDecodeError, match="image decode failed") as info:
        preprocess_image(b"\x89PNG\r\n\x1a\nnot really", "art-1")
    assert info.value.article_id == "art-1"


def test_exclude_incomplete(tmp_path):
    (tmp_path / "ok.png").write_bytes(_png())
    (tmp_path / "bad.png").write_bytes(b"garbage")
    rows = [{"id": "ok", "language": "hi", "text": "x", "label": 0, "image_ref": "ok.png"},
            {"id": "none", "language": "hi", "text": "x", "label": 0},
            {"id": "bad", "language": "hi", "text": "x", "label": 1, "image_ref": "bad.png"},
            {"id": "gone", "language": "hi", "text": "x", "label": 1, "image_ref": "missing.png"}]
    kept, dropped = exclude_incomplete(load_manifest(_write_manifest(tmp_path / "m.jsonl", rows)))
    assert kept.ids == ["ok"]
    assert dropped == ["none", "bad", "gone"]


# --- translation --------------------------------------------------------------

def test_identity_translation_sets_flag():
    art = NewsArticle("a", "hi", "नमस्ते 😀 दुनिया", 1)
    out = translate_article(art, IdentityTranslator())
    assert out.text_en == "नमस्ते दुनिया"
    assert out.translator == "identity"


def test_lookup_translation():
    tr = LookupTranslator({"नमस्ते": "hello", "दुनिया": "world"})
    assert translate_article(NewsArticle("a", "hi", "नमस्ते", 1), tr).text_en == "hello"
    assert translate_article(NewsArticle("b", "hi", "नमस्ते दुनिया", 1), tr).text_en == "hello world"


def test_existing_translation_is_kept():
    art = NewsArticle("a", "hi", "x", 1, text_en="given")
    assert translate_article(art, LookupTranslator({"x": "y"})) is art


def test_translation_failure_names_article():
    class Broken:
        name = "broken"

        def translate(self, text, lang):
            raise RuntimeError("offline")

    with pytest.raises(TranslationError) as info:
        translate_article(NewsArticle("art-9", "hi", "x", 1), Broken())
    assert info.value.article_id == "art-9"


# --- split and stats ----------------------------------------------------------

@pytest.mark.parametrize("n, expected", [(2, 2), (3, 2), (10, 8), (11, 9), (28085, 22468)])
def test_train_size_half_up(n, expected):
    assert train_size(n, 0.8) == expected


def test_split_is_deterministic_and_seed_sensitive():
    ids = [f"r{i}" for i in range(100)]
    a, b = split_dataset(ids, seed=7), split_dataset(ids, seed=7)
    assert a == b
    assert split_dataset(ids, seed=8).train_ids != a.train_ids


@pytest.mark.parametrize("ratio", [0.0, 1.0, -0.1, 1.5])
def test_split_bad_ratio(ratio):
    with pytest.raises(ValueError):
        split_dataset(["a", "b", "c"], ratio=ratio)


def test_split_too_small():
    with pytest.raises(ValueError):
        split_dataset(["only"])


def test_stats_hand_count():
    recs = [NewsArticle(str(i), lang, "t", lab) for i, (lang, lab) in enumerate(
        [("hi", 0), ("hi", 1), ("hi", 1), ("bn", 0), ("ta", 0),
         ("ta", 0), ("ta", 1), ("gu", 1), ("pa", 0), ("ml", 1)])]
    s = compute_stats(DatasetManifest(recs, "."))
    assert s.per_language["hi"] == {"real": 2, "fake": 1}
    assert s.per_language["ta"] == {"real": 1, "fake": 2}
    assert s.per_language["mr"] == {"real": 0, "fake": 0}
    assert (s.real, s.fake, s.total) == (5, 5, 10)
