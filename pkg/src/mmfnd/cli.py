"""``mmfnd`` command line: prepare, train, evaluate, ablate, report (and synth).

Exit codes: 0 success, 1 runtime/data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

from . import evaluation as ev
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, dump_config, load_config, make_hub, make_translator
from .dataset import DatasetManifest, split_dataset
from .errors import MMFNDError
from .fusion import FULL_MASK, pathway_dims
from .pipeline import extract_features, load_prepared, prepare_dataset
from .synthetic import make_synthetic_corpus, plant_signal
from .training import LabeledBatch, TrainConfig, evaluate_on_split, train

log = logging.getLogger("mmfnd")

CHECKPOINT_NAME = "checkpoint.ckpt"


def _fresh_dir(path: str | Path, overwrite: bool) -> Path:
    path = Path(path)
    if path.exists() and any(path.iterdir()):
        if not overwrite:
            raise MMFNDError(f"output directory {path} exists and is not empty; pass --overwrite to replace it")
        shutil.rmtree(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _require(path: str | Path, what: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise MMFNDError(f"{what} not found: {path}")
    return path


def _formats(value: str) -> list[str]:
    fmts = [f.strip() for f in value.split(",") if f.strip()]
    bad = [f for f in fmts if f not in ("json", "csv", "plots")]
    if bad or not fmts:
        raise argparse.ArgumentTypeError(f"formats must be a comma list of json,csv,plots; got {value!r}")
    return fmts


def _run_config(args) -> RunConfig:
    cfg = load_config(_require(args.config, "config file") if getattr(args, "config", None) else None)
    if getattr(args, "seed", None) is not None:
        cfg.train = TrainConfig.from_json({**cfg.train.to_json(), "seed": args.seed})
    return cfg


def _features(manifest: DatasetManifest, cfg: RunConfig, hub, ids, mask=None) -> LabeledBatch:
    data = extract_features(manifest, hub, mask or cfg.train.mask, ids)
    if cfg.planted_signal:
        log.warning("planting a label-dependent signal into features (verification only)")
        data = plant_signal(data, float(cfg.planted_signal["strength"]),
                            int(cfg.planted_signal.get("seed", 0)))
    return data


def _split(manifest: DatasetManifest, cfg: RunConfig):
    return split_dataset(manifest, cfg.split_ratio, cfg.split_seed)


# ---------------------------------------------------------------------------
# subcommands

def cmd_prepare(args) -> int:
    manifest = _require(args.manifest, "manifest")
    translator = make_translator(args.translator)
    out = _fresh_dir(args.out, args.overwrite)
    result = prepare_dataset(manifest, out, translator, args.root)
    print(f"prepared {len(result.manifest)} records, dropped {len(result.dropped)} -> {out}")
    return 0


def cmd_train(args) -> int:
    data_dir = _require(args.data, "prepared dataset")
    cfg = _run_config(args)
    manifest = load_prepared(data_dir)
    out = _fresh_dir(args.out, args.overwrite)
    hub = make_hub(cfg, data_dir / "feature_cache")
    split = _split(manifest, cfg)
    train_data = _features(manifest, cfg, hub, split.train_ids)
    ckpt, train_log = train(train_data, cfg.train)
    # everything evaluate needs to rebuild the same test features; no paths or clocks
    ckpt.extra["run_config"] = cfg.to_json()
    ckpt.extra["backends"] = hub.describe()
    save_checkpoint(ckpt, out / CHECKPOINT_NAME)
    (out / "train_log.csv").write_text(train_log.to_csv(), encoding="utf-8")
    (out / "split.json").write_text(json.dumps(split.to_json(), indent=2), encoding="utf-8")
    (out / "config.yaml").write_text(dump_config(cfg), encoding="utf-8")
    last = train_log.epochs[-1] if train_log.epochs else None
    summary = f"loss {last.loss:.4f}, train accuracy {last.accuracy:.3f}" if last else "no epochs run"
    print(f"trained {len(train_data)} records ({summary}) -> {out / CHECKPOINT_NAME}")
    return 0


def cmd_evaluate(args) -> int:
    ckpt = load_checkpoint(_require(args.ckpt, "checkpoint"))
    data_dir = _require(args.data, "prepared dataset")
    cfg = RunConfig.from_json(ckpt.extra.get("run_config"))
    if args.config:
        override = load_config(_require(args.config, "config file"))
        cfg.backends, cfg.n_max = override.backends, override.n_max
    manifest = load_prepared(data_dir)
    hub = make_hub(cfg, data_dir / "feature_cache")
    dims = pathway_dims(hub)
    for p, d in dims.items():
        if d != ckpt.params.dims[p]:
            raise MMFNDError(f"dimension mismatch for pathway {p}: data features have shape (n, {d}), "
                             f"checkpoint expects (n, {ckpt.params.dims[p]})")
    split = _split(manifest, cfg)
    test = _features(manifest, cfg, hub, split.test_ids, ckpt.mask)
    preds = evaluate_on_split(ckpt, test)
    by_id = manifest.by_id()
    report = ev.build_report(test.labels.tolist(), preds, method=args.method,
                             languages=[by_id[i].language for i in test.ids],
                             config={"checkpoint": ckpt.config_echo(), "split": {"ratio": cfg.split_ratio,
                                     "seed": cfg.split_seed, "n_test": len(test)}})
    out = _fresh_dir(args.report, args.overwrite)
    files = ev.emit_report(report, out, args.formats)
    print(f"accuracy {report.accuracy:.3f} on {len(test)} test records; wrote {', '.join(f.name for f in files)}")
    return 0


def cmd_ablate(args) -> int:
    spec = ev.ablation_spec(args.suite)
    data_dir = _require(args.data, "prepared dataset")
    cfg = _run_config(args)
    manifest = load_prepared(data_dir)
    out = _fresh_dir(args.out, args.overwrite)
    hub = make_hub(cfg, data_dir / "feature_cache")
    split = _split(manifest, cfg)
    train_data = _features(manifest, cfg, hub, split.train_ids, FULL_MASK)
    test_data = _features(manifest, cfg, hub, split.test_ids, FULL_MASK)
    by_id = manifest.by_id()
    rows = ev.run_ablation_suite(spec, train_data, test_data, cfg.train,
                                 languages=[by_id[i].language for i in test_data.ids])
    files = ev.emit_report(rows, out, args.formats, stem=f"ablation_{spec.suite}", suite=spec.suite)
    for label, report in rows:
        print(f"{label:>16}: accuracy {report.accuracy:.3f}")
    print(f"wrote {', '.join(f.name for f in files)}")
    return 0


def cmd_report(args) -> int:
    src = _require(args.input, "report json")
    reports = ev.load_reports(src)
    out = Path(args.out) if args.out else src.parent
    out.mkdir(parents=True, exist_ok=True)
    files = ev.emit_report(reports if len(reports) > 1 else reports[0], out, args.emit, stem=src.stem)
    print(f"wrote {', '.join(f.name for f in files)}")
    return 0


def cmd_synth(args) -> int:
    out = _fresh_dir(args.out, args.overwrite)
    path = make_synthetic_corpus(out, n=args.n, seed=args.seed, n_without_image=args.without_image)
    print(f"wrote {args.n} synthetic records -> {path}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmfnd", description="Multimodal multilingual fake-news detection kit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="clean, translate and preprocess a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--translator", default="identity", help="identity | lookup:<table.json>")
    p.add_argument("--root", default=None, help="image root (default: manifest directory)")
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="extract features and train the fusion classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on the held-out split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True, help="output directory for report files")
    p.add_argument("--formats", type=_formats, default=["json", "csv"])
    p.add_argument("--config", default=None, help="override backend selection")
    p.add_argument("--method", default="MMCFND")
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="run an ablation suite")
    p.add_argument("--suite", required=True, choices=["modality", "multimodal", "caption"])
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--formats", type=_formats, default=["json", "csv"])
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="render charts from a report json")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--emit", type=_formats, default=["plots"])
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="write a synthetic corpus for smoke tests")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--without-image", type=int, default=0)
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MMFNDError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
