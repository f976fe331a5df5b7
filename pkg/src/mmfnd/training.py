"""Mini-batch Adam training of the fusion head over precomputed feature bundles."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Mapping, Sequence

import numpy as np

from .checkpoint import Checkpoint, as_float32_params, load_checkpoint, save_checkpoint  # noqa: F401
from .errors import ConfigError, NumericalError, ShapeError
from .fusion import (FULL_MASK, PATHWAYS, Batch, ClassifierParams, FeatureBundle, FusionModel,
                     PathwayMask, Prediction, check_dims, loss_and_grads, sigmoid, stack_bundles)

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    epochs: int = 10
    seed: int = 42
    dropout: float = 0.2
    P: int = 256
    H: int = 256
    n_hidden: int = 1
    threshold: float = 0.5
    mask: PathwayMask = FULL_MASK
    deterministic_mode: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def bad(name, why):
            raise ConfigError(f"invalid config field '{name}': {why}")
        if not isinstance(self.batch_size, int) or self.batch_size < 1:
            bad("batch_size", f"must be an integer >= 1, got {self.batch_size!r}")
        if not self.learning_rate > 0:
            bad("learning_rate", f"must be > 0, got {self.learning_rate!r}")
        if self.optimizer != "adam":
            bad("optimizer", f"only 'adam' is supported, got {self.optimizer!r}")
        if not isinstance(self.epochs, int) or self.epochs < 0:
            bad("epochs", f"must be an integer >= 0, got {self.epochs!r}")
        if not 0.0 <= self.dropout < 1.0:
            bad("dropout", f"must lie in [0, 1), got {self.dropout!r}")
        for name in ("P", "H"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                bad(name, f"must be a positive integer, got {getattr(self, name)!r}")
        if not isinstance(self.n_hidden, int) or self.n_hidden < 1:
            bad("n_hidden", f"must be a positive integer, got {self.n_hidden!r}")
        if not 0.0 < self.threshold < 1.0:
            bad("threshold", f"must lie in (0, 1), got {self.threshold!r}")

    def to_json(self) -> dict:
        d = asdict(self)
        d["mask"] = self.mask.to_json()
        return d

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
        kwargs = dict(d)
        if "mask" in kwargs and not isinstance(kwargs["mask"], PathwayMask):
            try:
                kwargs["mask"] = PathwayMask.from_json(kwargs["mask"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"invalid config field 'mask': {exc}") from exc
        return cls(**kwargs)


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, arrays: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1, c2 = 1.0 - b1 ** self.t, 1.0 - b2 ** self.t
        for name, g in grads.items():
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            arrays[name] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class EpochLog:
    epoch: int
    loss: float
    accuracy: float
    seconds: float


@dataclass
class TrainLog:
    epochs: list[EpochLog] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.epochs)

    @property
    def losses(self) -> list[float]:
        return [e.loss for e in self.epochs]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "loss", "accuracy", "seconds"])
        for e in self.epochs:
            w.writerow([e.epoch, f"{e.loss:.6f}", f"{e.accuracy:.6f}", f"{e.seconds:.3f}"])
        return buf.getvalue()


class TrainingDiverged(NumericalError):
    def __init__(self, message: str, checkpoint: Checkpoint, log: TrainLog):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.log = log


@dataclass
class LabeledBatch:
    """Stacked pathway features (float32), labels and the pathways present in the data."""

    features: Batch
    labels: np.ndarray
    mask: PathwayMask = FULL_MASK
    ids: tuple[str, ...] = ()

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dims(self) -> dict[str, int]:
        return {p: self.features[p].shape[1] for p in PATHWAYS}

    @classmethod
    def from_bundles(cls, bundles: Sequence[FeatureBundle], labels: Sequence[int],
                     ids: Sequence[str] = ()) -> "LabeledBatch":
        features, mask = stack_bundles(bundles)
        return cls(features, np.asarray(labels, dtype=np.int64), mask, tuple(ids))

    def subset(self, idx: np.ndarray | Sequence[int]) -> "LabeledBatch":
        idx = np.asarray(idx, dtype=np.int64)
        ids = tuple(self.ids[i] for i in idx) if self.ids else ()
        return LabeledBatch({p: v[idx] for p, v in self.features.items()}, self.labels[idx],
                            self.mask, ids)

    def empty_like(self) -> "LabeledBatch":
        return self.subset(np.arange(0))


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
    shuffle_ss, dropout_ss = ss.spawn(2)
    return (np.random.Generator(np.random.PCG64(shuffle_ss)),
            np.random.Generator(np.random.PCG64(dropout_ss)))


_F32_MAX = float(np.finfo(np.float32).max)


def _check_storable(params: ClassifierParams) -> None:
    # checkpoints hold float32; anything beyond its range would be stored as inf
    for name, arr in params.arrays.items():
        if np.max(np.abs(arr), initial=0.0) > _F32_MAX:
            raise NumericalError(f"numerical overflow: {name} exceeds float32 range")


def _make_checkpoint(params: ClassifierParams, config: TrainConfig, epoch: int,
                     metrics: dict[str, float]) -> Checkpoint:
    return Checkpoint(as_float32_params(params), config.mask, config.threshold, config.seed,
                      epoch, metrics, extra={"train_config": config.to_json()})


def train(data: LabeledBatch, config: TrainConfig) -> tuple[Checkpoint, TrainLog]:
    """Adam on mean BCE over shuffled mini-batches (final partial batch kept)."""
    if len(data) == 0:
        raise ValueError("training set is empty")
    config.validate()
    params = ClassifierParams.initialize(data.dims, config.seed, config.P, config.H,
                                         config.n_hidden, config.dropout)
    check_dims(data.features, params)
    mask = config.mask & data.mask
    shuffle_rng, dropout_rng = _streams(config.seed)
    opt = Adam(config.learning_rate)
    log = TrainLog()
    n = len(data)
    metrics: dict[str, float] = {}
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        order = shuffle_rng.permutation(n)
        total_loss, correct = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            batch = {p: v[idx] for p, v in data.features.items()}
            y = data.labels[idx]
            good = params.copy()
            try:
                loss, grads, fc = loss_and_grads(batch, y, params, mask, training=True, rng=dropout_rng)
                if not np.isfinite(loss):
                    raise NumericalError("non-finite loss")
                opt.step(params.arrays, grads)
                params.check_finite()
                _check_storable(params)
            except NumericalError as exc:
                ckpt = _make_checkpoint(good, config, epoch - 1, metrics)
                raise TrainingDiverged(f"training aborted in epoch {epoch}: {exc}", ckpt, log) from exc
            total_loss += loss * len(idx)
            correct += int(np.sum((sigmoid(fc.logits) >= config.threshold) == (y == 1)))
        entry = EpochLog(epoch, total_loss / n, correct / n, time.perf_counter() - started)
        log.epochs.append(entry)
        metrics = {"loss": entry.loss, "train_accuracy": entry.accuracy}
        logger.info("epoch %d loss %.4f acc %.4f", epoch, entry.loss, entry.accuracy)
    return _make_checkpoint(params, config, config.epochs, metrics), log


def model_from_checkpoint(ckpt: Checkpoint, hub=None) -> FusionModel:
    return FusionModel(ckpt.params, hub, ckpt.mask, ckpt.threshold)


def evaluate_on_split(ckpt: Checkpoint, data: LabeledBatch) -> list[Prediction]:
    """Inference-mode predictions for every record, in input order."""
    if len(data) == 0:
        return []
    for p in PATHWAYS:
        if data.features[p].shape[1] != ckpt.params.dims[p]:
            raise ShapeError(f"pathway {p}: data dim {data.features[p].shape[1]} vs "
                             f"checkpoint dim {ckpt.params.dims[p]}")
    return model_from_checkpoint(ckpt).predict_batch(data.features, data.mask)
