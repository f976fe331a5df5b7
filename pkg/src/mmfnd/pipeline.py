"""Glue between prepared datasets on disk, the encoder hub and training data."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .dataset import (DatasetManifest, Translator, clean_article, compute_stats, exclude_incomplete,
                      load_article_image, load_manifest, preprocess_image_uint8, translate_article)
from .encoders import EncoderHub
from .errors import ImageDecodeError
from .fusion import FULL_MASK, PATHWAYS, PathwayMask, build_feature_bundle, pathway_dims
from .training import LabeledBatch

logger = logging.getLogger(__name__)

PREPARED_META = "prepared.json"


@dataclass
class PrepareResult:
    manifest: DatasetManifest
    dropped: list[str]
    out_dir: Path


def tensor_name(article_id: str) -> str:
    return hashlib.sha256(article_id.encode("utf-8")).hexdigest()[:24] + ".png"


def prepare_dataset(manifest_path: str | Path, out_dir: str | Path, translator: Translator,
                    root_dir: str | Path | None = None) -> PrepareResult:
    """Clean, translate, drop image-less records and store 224x224 RGB tensors.

    Tensors are written as lossless PNG, so decoding one reproduces the
    preprocessed tensor exactly. ``out_dir`` must already exist.
    """
    out_dir = Path(out_dir)
    source = load_manifest(manifest_path, root_dir)
    kept, dropped = exclude_incomplete(source)
    (out_dir / "tensors").mkdir(parents=True, exist_ok=True)
    records = []
    for rec in kept.records:
        try:
            pixels = preprocess_image_uint8((kept.root_dir / rec.image_ref).read_bytes(), rec.id)
        except (ImageDecodeError, OSError):
            dropped.append(rec.id)
            continue
        name = f"tensors/{tensor_name(rec.id)}"
        Image.fromarray(pixels).save(out_dir / name, format="PNG", compress_level=1)
        rec = translate_article(clean_article(rec), translator)
        records.append(replace(rec, image_ref=name))
    prepared = DatasetManifest(records, out_dir)
    prepared.write(out_dir / "manifest.jsonl")
    (out_dir / "dropped.json").write_text(
        json.dumps({"count": len(dropped), "dropped": dropped}, indent=2, ensure_ascii=False), encoding="utf-8")
    (out_dir / "stats.json").write_text(json.dumps(compute_stats(prepared).to_json(), indent=2),
                                        encoding="utf-8")
    (out_dir / PREPARED_META).write_text(json.dumps({
        "schema_version": 1, "source_manifest": str(Path(manifest_path).resolve()),
        "translator": translator.name, "records": len(records), "dropped": len(dropped),
    }, indent=2), encoding="utf-8")
    return PrepareResult(prepared, dropped, out_dir)


def load_prepared(data_dir: str | Path) -> DatasetManifest:
    data_dir = Path(data_dir)
    if not (data_dir / PREPARED_META).exists():
        raise FileNotFoundError(f"{data_dir} is not a prepared dataset (no {PREPARED_META})")
    return load_manifest(data_dir / "manifest.jsonl", data_dir)


def extract_features(manifest: DatasetManifest, hub: EncoderHub, mask: PathwayMask = FULL_MASK,
                     ids: Sequence[str] | None = None) -> LabeledBatch:
    """Feature bundles for ``ids`` (default: every record), in the given order."""
    by_id = manifest.by_id()
    chosen = [by_id[i] for i in ids] if ids is not None else list(manifest.records)
    needs_image = mask.use_image or mask.use_multimodal or mask.use_caption
    bundles = []
    for rec in chosen:
        img = load_article_image(rec, manifest.root_dir) if needs_image else None
        bundles.append(build_feature_bundle(rec, img, hub, mask))
    if not bundles:
        dims = pathway_dims(hub)
        feats = {p: np.zeros((0, dims[p]), dtype=np.float32) for p in PATHWAYS}
        return LabeledBatch(feats, np.zeros(0, dtype=np.int64), mask, ())
    return LabeledBatch.from_bundles(bundles, [r.label for r in chosen], [r.id for r in chosen])
