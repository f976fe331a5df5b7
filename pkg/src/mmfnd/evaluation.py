"""Confusion counts, accuracy/precision/recall/F1, per-language breakdowns,
ablation suites and report emission (json, csv, bar charts)."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from collections import defaultdict
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .dataset import FAKE, REAL, NewsArticle
from .errors import MMFNDError
from .fusion import FULL_MASK, PATHWAYS, PathwayMask, Prediction
from .training import LabeledBatch, TrainConfig, evaluate_on_split, train

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
ZERO_DIVISION_NOTE = "precision:=0 if TP+FP=0; recall:=0 if TP+FN=0; f1:=0 if P+R=0"
CSV_HEADER = ["method", "accuracy", "fake_p", "fake_r", "fake_f1", "real_p", "real_r", "real_f1"]
DECIMALS = 3


@dataclass(frozen=True)
class ConfusionCounts:
    TP: int
    TN: int
    FP: int
    FN: int
    positive_label: int = FAKE

    @property
    def total(self) -> int:
        return self.TP + self.TN + self.FP + self.FN

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        if other.positive_label != self.positive_label:
            raise ValueError("cannot add counts with different positive labels")
        return ConfusionCounts(self.TP + other.TP, self.TN + other.TN, self.FP + other.FP,
                               self.FN + other.FN, self.positive_label)


@dataclass(frozen=True)
class ClassMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float


def _labels(seq, name: str) -> np.ndarray:
    arr = np.asarray([p.label if isinstance(p, Prediction) else p for p in seq])
    if arr.ndim != 1 or not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{name} must contain only labels 0 and 1")
    return arr.astype(np.int64)


def confusion_counts(y_true: Sequence[int], y_pred: Sequence[int] | Sequence[Prediction],
                     positive_label: int = FAKE) -> ConfusionCounts:
    if positive_label not in (0, 1):
        raise ValueError("positive_label must be 0 or 1")
    t, p = _labels(y_true, "y_true"), _labels(y_pred, "y_pred")
    if t.size != p.size:
        raise ValueError(f"length mismatch: {t.size} true labels vs {p.size} predictions")
    if t.size == 0:
        raise ValueError("need at least one label")
    tpos, ppos = t == positive_label, p == positive_label
    return ConfusionCounts(TP=int(np.sum(tpos & ppos)), TN=int(np.sum(~tpos & ~ppos)),
                           FP=int(np.sum(~tpos & ppos)), FN=int(np.sum(tpos & ~ppos)),
                           positive_label=positive_label)


def f1_from(precision: float, recall: float) -> float:
    return 2 * precision * recall / (precision + recall) if precision + recall else 0.0


def compute_metrics(c: ConfusionCounts) -> ClassMetrics:
    if c.total == 0:
        raise ValueError("cannot compute metrics over zero records")
    accuracy = (c.TP + c.TN) / c.total
    precision = c.TP / (c.TP + c.FP) if c.TP + c.FP else 0.0
    recall = c.TP / (c.TP + c.FN) if c.TP + c.FN else 0.0
    return ClassMetrics(accuracy, precision, recall, f1_from(precision, recall))


def swap_positive(c: ConfusionCounts) -> ConfusionCounts:
    return ConfusionCounts(c.TN, c.TP, c.FN, c.FP, 1 - c.positive_label)


# ---------------------------------------------------------------------------
# reports

@dataclass
class LanguageMetrics:
    n: int
    accuracy: float
    fake: ClassMetrics
    real: ClassMetrics
    counts: ConfusionCounts


@dataclass
class EvaluationReport:
    method: str
    accuracy: float
    fake: ClassMetrics
    real: ClassMetrics
    counts: ConfusionCounts
    per_language: dict[str, LanguageMetrics] = field(default_factory=dict)
    config: dict[str, Any] = field(default_factory=dict)
    timestamp: str = ""
    schema_version: int = REPORT_SCHEMA_VERSION
    zero_division: str = ZERO_DIVISION_NOTE

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> "EvaluationReport":
        try:
            if d.get("schema_version") != REPORT_SCHEMA_VERSION:
                raise ValueError(f"unsupported report schema {d.get('schema_version')!r}")
            per_language = {
                lang: LanguageMetrics(m["n"], m["accuracy"], ClassMetrics(**m["fake"]),
                                      ClassMetrics(**m["real"]), ConfusionCounts(**m["counts"]))
                for lang, m in d.get("per_language", {}).items()}
            return cls(method=d["method"], accuracy=d["accuracy"], fake=ClassMetrics(**d["fake"]),
                       real=ClassMetrics(**d["real"]), counts=ConfusionCounts(**d["counts"]),
                       per_language=per_language, config=dict(d.get("config", {})),
                       timestamp=d.get("timestamp", ""), schema_version=d["schema_version"],
                       zero_division=d.get("zero_division", ZERO_DIVISION_NOTE))
        except (KeyError, TypeError, AttributeError) as exc:
            raise MMFNDError(f"malformed report: {exc!r}") from exc

    def csv_row(self) -> list[str]:
        vals = [self.accuracy, self.fake.precision, self.fake.recall, self.fake.f1,
                self.real.precision, self.real.recall, self.real.f1]
        return [self.method] + [f"{v:.{DECIMALS}f}" for v in vals]


def _class_views(y_true, y_pred) -> tuple[float, ClassMetrics, ClassMetrics, ConfusionCounts]:
    c_fake = confusion_counts(y_true, y_pred, FAKE)
    fake = compute_metrics(c_fake)
    real = compute_metrics(swap_positive(c_fake))
    return fake.accuracy, fake, real, c_fake


def per_language_breakdown(predictions: Mapping[str, int | Prediction] | Iterable[tuple[str, int | Prediction]],
                           articles: Mapping[str, NewsArticle] | Iterable[NewsArticle]) -> dict[str, LanguageMetrics]:
    """Metrics computed independently per language; languages without records are absent."""
    if not isinstance(articles, Mapping):
        articles = {a.id: a for a in articles}
    pairs = predictions.items() if isinstance(predictions, Mapping) else predictions
    buckets: dict[str, tuple[list[int], list[int]]] = defaultdict(lambda: ([], []))
    for article_id, pred in pairs:
        if article_id not in articles:
            raise KeyError(f"prediction for unknown article {article_id!r}")
        art = articles[article_id]
        y_true, y_pred = buckets[art.language]
        y_true.append(art.label)
        y_pred.append(pred.label if isinstance(pred, Prediction) else int(pred))
    out = {}
    for lang in sorted(buckets):
        y_true, y_pred = buckets[lang]
        acc, fake, real, counts = _class_views(y_true, y_pred)
        out[lang] = LanguageMetrics(len(y_true), acc, fake, real, counts)
    return out


def report_timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the clock for reproducible report files
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    now = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return now.isoformat(timespec="seconds")


def build_report(y_true: Sequence[int], predictions: Sequence[int | Prediction],
                 method: str = "MMCFND", languages: Sequence[str] | None = None,
                 config: Mapping[str, Any] | None = None, timestamp: str | None = None) -> EvaluationReport:
    acc, fake, real, counts = _class_views(y_true, predictions)
    per_language: dict[str, LanguageMetrics] = {}
    if languages is not None:
        if len(languages) != len(y_true):
            raise ValueError("languages must align with y_true")
        ids = [str(i) for i in range(len(y_true))]
        arts = {i: NewsArticle(i, lang, "", int(y)) for i, lang, y in zip(ids, languages, y_true)}
        per_language = per_language_breakdown(list(zip(ids, predictions)), arts)
    if timestamp is None:
        timestamp = report_timestamp()
    return EvaluationReport(method, acc, fake, real, counts, per_language, dict(config or {}), timestamp)


# ---------------------------------------------------------------------------
# ablations

@dataclass(frozen=True)
class AblationSpec:
    suite: str
    rows: tuple[tuple[str, PathwayMask], ...]


SUITES = {
    "modality": AblationSpec("modality", (
        ("w/o Image", PathwayMask(use_caption=False, use_text=True, use_image=False, use_multimodal=False)),
        ("w/o Text", PathwayMask(use_caption=True, use_text=False, use_image=True, use_multimodal=False)),
        ("Text+Image", FULL_MASK),
    )),
    "multimodal_pathway": AblationSpec("multimodal_pathway", (
        ("w/o multimodal", replace(FULL_MASK, use_multimodal=False)),
        ("with multimodal", FULL_MASK),
    )),
    "caption_pathway": AblationSpec("caption_pathway", (
        ("w/o caption", replace(FULL_MASK, use_caption=False)),
        ("with caption", FULL_MASK),
    )),
}
SUITE_ALIASES = {"modality": "modality", "multimodal": "multimodal_pathway",
                 "caption": "caption_pathway", "multimodal_pathway": "multimodal_pathway",
                 "caption_pathway": "caption_pathway"}


def ablation_spec(name: str) -> AblationSpec:
    try:
        return SUITES[SUITE_ALIASES[name]]
    except KeyError:
        raise ValueError(f"unknown ablation suite {name!r}; choose from modality, multimodal, caption") from None


def disabled_pathways(mask: PathwayMask) -> list[str]:
    return [p for p in PATHWAYS if not mask.enabled(p)]


def check_masking_invariance(ckpt, data: LabeledBatch, n_perturbations: int = 3,
                             seed: int = 0) -> int:
    """Overwrite every disabled pathway with random features and require identical logits.

    Returns the number of perturbations checked.
    """
    from .training import model_from_checkpoint

    disabled = disabled_pathways(ckpt.mask)
    if not disabled or len(data) == 0:
        return 0
    model = model_from_checkpoint(ckpt)
    # the raw features deliberately ignore data.mask: only the model's mask protects them
    base = [p.logits for p in model.predict_batch(data.features)]
    rng = np.random.default_rng(seed)
    for _ in range(n_perturbations):
        feats = dict(data.features)
        for p in disabled:
            feats[p] = rng.normal(size=feats[p].shape) * rng.uniform(0.1, 10.0)
        got = [p.logits for p in model.predict_batch(feats)]
        if got != base:
            raise MMFNDError(f"masking invariance violated for disabled pathways {disabled}")
    return n_perturbations


def run_ablation_suite(spec: AblationSpec, train_data: LabeledBatch, test_data: LabeledBatch,
                       config: TrainConfig, languages: Sequence[str] | None = None,
                       invariance_checks: int = 3,
                       timestamp: str | None = None) -> list[tuple[str, EvaluationReport]]:
    """Retrain one model per row from the same seed and split; rows keep spec order."""
    results = []
    for label, mask in spec.rows:
        cfg = replace(config, mask=mask)
        ckpt, _ = train(train_data, cfg)
        preds = evaluate_on_split(ckpt, test_data)
        check_masking_invariance(ckpt, test_data, invariance_checks, seed=config.seed)
        report = build_report(test_data.labels.tolist(), preds, method=label, languages=languages,
                              config={"suite": spec.suite, "train": cfg.to_json()}, timestamp=timestamp)
        results.append((label, report))
        logger.info("%s: accuracy %.3f", label, report.accuracy)
    return results


# ---------------------------------------------------------------------------
# emission

def reports_to_csv(reports: Sequence[EvaluationReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


def parse_csv(text: str) -> list[dict[str, Any]]:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows and text.strip().split("\n")[0].split(",") != CSV_HEADER:
        raise ValueError("not a metrics csv")
    return [{"method": r["method"], **{k: float(r[k]) for k in CSV_HEADER[1:]}} for r in rows]


def _as_rows(results) -> list[EvaluationReport]:
    if isinstance(results, EvaluationReport):
        return [results]
    return [r if isinstance(r, EvaluationReport) else r[1] for r in results]


def plot_reports(reports: Sequence[EvaluationReport], out_dir: Path, stem: str) -> list[Path]:
    """One grouped bar chart per class family; one group per report."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    names = ["accuracy", "precision", "recall", "f1"]
    x = np.arange(len(reports))
    width = 0.8 / len(names)
    for family in ("fake", "real"):
        fig, ax = plt.subplots(figsize=(max(4.0, 1.6 * len(reports) + 2), 3.6))
        for k, name in enumerate(names):
            vals = [getattr(getattr(r, family), name) for r in reports]
            ax.bar(x + (k - (len(names) - 1) / 2) * width, vals, width, label=name)
        ax.set_xticks(x, [r.method for r in reports])
        ax.set_ylim(0.0, 1.05)
        ax.set_title(f"{family} news metrics")
        ax.legend(loc="lower right", fontsize="small")
        fig.tight_layout()
        path = out_dir / f"{stem}_{family}.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        paths.append(path)
    return paths


def emit_report(results, out_dir: str | os.PathLike, formats: Iterable[str] = ("json",),
                stem: str = "report", suite: str | None = None) -> list[Path]:
    """Write a report (or ablation rows) as json/csv/plots; returns the files written."""
    formats = set(formats)
    unknown = formats - {"json", "csv", "plots"}
    if unknown:
        raise ValueError(f"unknown report formats: {', '.join(sorted(unknown))}")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise MMFNDError(f"cannot create output directory {out_dir}: {exc}") from exc
    if not os.access(out_dir, os.W_OK):
        raise MMFNDError(f"output directory {out_dir} is not writable")
    reports = _as_rows(results)
    written = []
    if "json" in formats:
        if isinstance(results, EvaluationReport):
            payload: dict = results.to_json()
        else:
            payload = {"schema_version": REPORT_SCHEMA_VERSION, "suite": suite,
                       "rows": [r.to_json() for r in reports]}
        path = out_dir / f"{stem}.json"
        path.write_text(json.dumps(payload, indent=2, ensure_ascii=False), encoding="utf-8")
        written.append(path)
    if "csv" in formats:
        path = out_dir / f"{stem}.csv"
        path.write_text(reports_to_csv(reports), encoding="utf-8")
        written.append(path)
    if "plots" in formats:
        written.extend(plot_reports(reports, out_dir, stem))
    return written


def load_reports(path: str | os.PathLike) -> list[EvaluationReport]:
    """Read a single-report or suite json file."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MMFNDError(f"malformed report json {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise MMFNDError(f"malformed report json {path}")
    if "rows" in data:
        return [EvaluationReport.from_json(r) for r in data["rows"]]
    return [EvaluationReport.from_json(data)]
