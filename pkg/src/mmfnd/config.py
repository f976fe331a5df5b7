"""Run configuration files (YAML, versioned) and backend construction."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from . import encoders as enc
from .cache import CACHE_ENV, EmbeddingCache
from .dataset import IdentityTranslator, LookupTranslator, Translator
from .errors import ConfigError
from .training import TrainConfig

CONFIG_SCHEMA_VERSION = 1
_TOP_LEVEL = {"schema_version", "train", "split", "backends", "n_max", "cache_dir",
              "planted_signal", "report_formats", "translator"}


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    split_ratio: float = 0.8
    split_seed: int = 42
    backends: dict[str, Any] = field(default_factory=lambda: {r: "stub" for r in enc.ROLES})
    n_max: int = enc.DEFAULT_N_MAX
    cache_dir: str | None = None
    # verification-only: label-dependent offset added to features (synthetic data)
    planted_signal: dict[str, float] | None = None
    report_formats: tuple[str, ...] = ("json", "csv")
    translator: str = "identity"

    def to_json(self) -> dict:
        return {
            "schema_version": CONFIG_SCHEMA_VERSION,
            "train": self.train.to_json(),
            "split": {"ratio": self.split_ratio, "seed": self.split_seed},
            "backends": self.backends,
            "n_max": self.n_max,
            "cache_dir": self.cache_dir,
            "planted_signal": self.planted_signal,
            "report_formats": list(self.report_formats),
            "translator": self.translator,
        }

    @classmethod
    def from_json(cls, d: Mapping[str, Any] | None) -> "RunConfig":
        d = dict(d or {})
        version = d.get("schema_version", CONFIG_SCHEMA_VERSION)
        if version != CONFIG_SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema_version {version!r}")
        unknown = set(d) - _TOP_LEVEL
        if unknown:
            raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")
        split = d.get("split") or {}
        backends = {r: "stub" for r in enc.ROLES}
        backends.update(d.get("backends") or {})
        cfg = cls(
            train=TrainConfig.from_json(d.get("train") or {}),
            split_ratio=float(split.get("ratio", 0.8)),
            split_seed=int(split.get("seed", 42)),
            backends=backends,
            n_max=int(d.get("n_max", enc.DEFAULT_N_MAX)),
            cache_dir=d.get("cache_dir"),
            planted_signal=d.get("planted_signal"),
            report_formats=tuple(d.get("report_formats") or ("json", "csv")),
            translator=d.get("translator", "identity"),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigError(f"invalid config field 'split.ratio': must lie in (0, 1), got {self.split_ratio}")
        if self.n_max < 2:
            raise ConfigError(f"invalid config field 'n_max': must be >= 2, got {self.n_max}")
        unknown = set(self.backends) - set(enc.ROLES)
        if unknown:
            raise ConfigError(f"unknown backend roles: {', '.join(sorted(unknown))}")
        if self.planted_signal is not None and "strength" not in self.planted_signal:
            raise ConfigError("invalid config field 'planted_signal': needs 'strength'")


def load_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    return RunConfig.from_json(raw)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_json(), sort_keys=False, allow_unicode=True)


def make_backend(role: str, spec: Any):
    """Build one backend from ``"stub"``, ``{"kind": "stub", "dim": n}`` or
    ``{"kind": "hf"|"keras", ...}`` (real adapters, loaded lazily)."""
    if spec in (None, "stub"):
        return enc.stub_backend(role)
    if not isinstance(spec, Mapping) or "kind" not in spec:
        raise ConfigError(f"backend for role {role!r} must be 'stub' or a mapping with 'kind'")
    kind = spec["kind"]
    if kind == "stub":
        return enc.stub_backend(role, spec.get("dim"))
    if kind in ("hf", "keras"):
        from . import adapters
        return adapters.build(role, dict(spec))
    raise ConfigError(f"unknown backend kind {kind!r} for role {role!r}")


def make_hub(cfg: RunConfig, default_cache: str | os.PathLike | None = None) -> enc.EncoderHub:
    backends = {role: make_backend(role, cfg.backends.get(role, "stub")) for role in enc.ROLES}
    root = os.environ.get(CACHE_ENV) or cfg.cache_dir or default_cache
    cache = EmbeddingCache(root) if root else None
    return enc.EncoderHub(backends, cache, cfg.n_max)


def make_translator(spec: str) -> Translator:
    """``identity`` or ``lookup:<path to a JSON object mapping source -> English>``."""
    if spec == "identity":
        return IdentityTranslator()
    if spec.startswith("lookup:"):
        path = Path(spec.split(":", 1)[1])
        try:
            table = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read translation table {path}: {exc}") from exc
        return LookupTranslator(table, name=f"lookup:{path.name}")
    raise ConfigError(f"unknown translator {spec!r}; use 'identity' or 'lookup:<table.json>'")
