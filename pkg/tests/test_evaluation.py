import json

import numpy as np
import pytest

from mmfnd import evaluation as ev
from mmfnd.dataset import NewsArticle
from mmfnd.errors import MMFNDError
from mmfnd.fusion import FULL_MASK, Prediction

from metrics_oracle import brute_force


def test_confusion_worked_example():
    c = ev.confusion_counts([0, 0, 1, 1], [0, 1, 1, 1])
    assert (c.TP, c.FN, c.FP, c.TN) == (1, 1, 0, 2)
    real = ev.compute_metrics(ev.swap_positive(c))
    assert real.precision == pytest.approx(2 / 3, abs=1e-12)
    assert real.recall == 1.0
    assert real.f1 == pytest.approx(0.8, abs=1e-12)
    fake = ev.compute_metrics(c)
    assert (fake.precision, fake.recall) == (1.0, 0.5)
    assert fake.accuracy == real.accuracy == 0.75


def test_predictions_accepted():
    preds = [Prediction(0.2, 0, -1.0), Prediction(0.9, 1, 2.0)]
    assert ev.confusion_counts([0, 1], preds) == ev.confusion_counts([0, 1], [0, 1])


@pytest.mark.parametrize("seed", range(20))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 60))
    t, p = rng.integers(0, 2, n).tolist(), rng.integers(0, 2, n).tolist()
    for positive in (0, 1):
        counts, metrics = brute_force(t, p, positive)
        c = ev.confusion_counts(t, p, positive)
        m = ev.compute_metrics(c)
        assert (c.TP, c.TN, c.FP, c.FN) == counts
        assert np.allclose([m.accuracy, m.precision, m.recall, m.f1], metrics, rtol=0, atol=1e-12)


def test_zero_division_is_zero():
    m = ev.compute_metrics(ev.confusion_counts([1, 1], [1, 1]))
    assert (m.precision, m.recall, m.f1, m.accuracy) == (0.0, 0.0, 0.0, 1.0)


@pytest.mark.parametrize("t, p", [([0, 2], [0, 1]), ([0, 1], [0]), ([], [])])
def test_bad_inputs(t, p):
    with pytest.raises(ValueError):
        ev.confusion_counts(t, p)


def test_per_language_breakdown():
    arts = [NewsArticle("a", "hi", "", 0), NewsArticle("b", "hi", "", 1), NewsArticle("c", "ta", "", 1)]
    out = ev.per_language_breakdown({"a": 0, "b": 0, "c": 1}, arts)
    assert sorted(out) == ["hi", "ta"]
    assert out["hi"].n == 2 and out["hi"].accuracy == 0.5
    assert out["ta"].accuracy == 1.0
    with pytest.raises(KeyError):
        ev.per_language_breakdown({"zz": 1}, arts)


def _report(method="m"):
    return ev.build_report([0, 0, 1, 1], [0, 1, 1, 1], method=method, languages=["hi", "ta", "hi", "ta"],
                           timestamp="2020-01-01T00:00:00+00:00")


def test_report_json_roundtrip():
    r = _report()
    back = ev.EvaluationReport.from_json(json.loads(json.dumps(r.to_json())))
    assert back == r
    with pytest.raises(MMFNDError):
        ev.EvaluationReport.from_json({"schema_version": 1})


def test_csv_layout_and_roundtrip():
    text = ev.reports_to_csv([_report("a"), _report("b")])
    lines = text.splitlines()
    assert lines[0] == "method,accuracy,fake_p,fake_r,fake_f1,real_p,real_r,real_f1"
    assert lines[1] == "a,0.750,1.000,0.500,0.667,0.667,1.000,0.800"
    rows = ev.parse_csv(text)
    assert [r["method"] for r in rows] == ["a", "b"] and rows[0]["real_f1"] == 0.8


def test_emit_and_reload(tmp_path):
    files = ev.emit_report(_report(), tmp_path, ["json", "csv", "plots"])
    assert sorted(f.name for f in files) == ["report.csv", "report.json", "report_fake.png", "report_real.png"]
    assert ev.load_reports(tmp_path / "report.json") == [_report()]
    rows = [("x", _report("x")), ("y", _report("y"))]
    ev.emit_report(rows, tmp_path, ["json"], stem="suite", suite="modality")
    assert [r.method for r in ev.load_reports(tmp_path / "suite.json")] == ["x", "y"]
    (tmp_path / "bad.json").write_text("{oops")
    with pytest.raises(MMFNDError):
        ev.load_reports(tmp_path / "bad.json")


@pytest.mark.parametrize("name, labels", [
    ("modality", ["w/o Image", "w/o Text", "Text+Image"]),
    ("multimodal", ["w/o multimodal", "with multimodal"]),
    ("caption", ["w/o caption", "with caption"]),
])
def test_suite_rows(name, labels):
    spec = ev.ablation_spec(name)
    assert [label for label, _ in spec.rows] == labels
    assert spec.rows[-1][1] == FULL_MASK


def test_modality_masks():
    masks = dict(ev.ablation_spec("modality").rows)
    assert ev.disabled_pathways(masks["w/o Image"]) == ["img", "multimodal", "caption"]
    assert ev.disabled_pathways(masks["w/o Text"]) == ["text", "multimodal"]


def test_unknown_suite():
    with pytest.raises(ValueError, match="unknown ablation suite"):
        ev.ablation_spec("everything")


def test_run_suite_on_small_data(small_features):
    from mmfnd.training import TrainConfig

    train_data, test_data = small_features
    rows = ev.run_ablation_suite(ev.ablation_spec("caption"), train_data, test_data,
                                 TrainConfig(P=8, H=8, epochs=1), timestamp="t")
    assert [label for label, _ in rows] == ["w/o caption", "with caption"]
    assert all(r.counts.total == len(test_data) for _, r in rows)
