"""Four-pathway feature bundles, the projection/aggregation head and BCE loss.

Pathways are always handled in the aggregation order
``text, img, multimodal, caption``. Parameters are float64 numpy arrays;
gradients are derived by hand so they can be checked against finite
differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from . import encoders as enc
from .dataset import NewsArticle
from .errors import EncoderError, NumericalError, ShapeError

PATHWAYS = ("text", "img", "multimodal", "caption")
EPS = 1e-7


@dataclass(frozen=True)
class PathwayMask:
    use_caption: bool = True
    use_text: bool = True
    use_image: bool = True
    use_multimodal: bool = True

    def __post_init__(self):
        if not (self.use_caption or self.use_text or self.use_image or self.use_multimodal):
            raise ValueError("pathway mask must enable at least one pathway")

    def enabled(self, pathway: str) -> bool:
        return {"text": self.use_text, "img": self.use_image,
                "multimodal": self.use_multimodal, "caption": self.use_caption}[pathway]

    def __and__(self, other: "PathwayMask") -> "PathwayMask":
        return PathwayMask(self.use_caption and other.use_caption, self.use_text and other.use_text,
                           self.use_image and other.use_image,
                           self.use_multimodal and other.use_multimodal)

    def to_json(self) -> dict:
        return {"use_caption": self.use_caption, "use_text": self.use_text,
                "use_image": self.use_image, "use_multimodal": self.use_multimodal}

    @classmethod
    def from_json(cls, d: Mapping) -> "PathwayMask":
        return cls(**{k: bool(d[k]) for k in ("use_caption", "use_text", "use_image", "use_multimodal")})


FULL_MASK = PathwayMask()
TEXT_ONLY = PathwayMask(use_caption=False, use_text=True, use_image=False, use_multimodal=False)


def pathway_dims(hub: enc.EncoderHub) -> dict[str, int]:
    return {
        "text": hub.dim(enc.TEXT_INDIC) + hub.dim(enc.TEXT_ENGLISH),
        "img": hub.dim(enc.IMAGE_CONV) + hub.dim(enc.IMAGE_PATCH),
        "multimodal": hub.dim(enc.MULTIMODAL),
        "caption": hub.dim(enc.CAPTION_TEXT),
    }


@dataclass
class FeatureBundle:
    f_text: np.ndarray
    f_img: np.ndarray
    f_multimodal: np.ndarray
    f_caption: np.ndarray
    mask: PathwayMask = FULL_MASK

    def vector(self, pathway: str) -> np.ndarray:
        return getattr(self, f"f_{pathway}")

    @property
    def dims(self) -> dict[str, int]:
        return {p: self.vector(p).size for p in PATHWAYS}

    def masked(self, mask: PathwayMask) -> "FeatureBundle":
        mask = self.mask & mask
        vecs = {f"f_{p}": (self.vector(p) if mask.enabled(p) else np.zeros_like(self.vector(p)))
                for p in PATHWAYS}
        return FeatureBundle(mask=mask, **vecs)


def build_feature_bundle(article: NewsArticle, img: np.ndarray | None, hub: enc.EncoderHub,
                         mask: PathwayMask = FULL_MASK) -> FeatureBundle:
    """Encode one article; only the enabled pathways touch their encoders."""
    if article.text_en is None and (mask.use_text or mask.use_multimodal):
        raise EncoderError(f"article {article.id}: text_en missing but text pathway enabled")
    if img is None and (mask.use_image or mask.use_multimodal or mask.use_caption):
        raise EncoderError(f"article {article.id}: image missing but an image pathway enabled")
    dims = pathway_dims(hub)
    zeros = {p: np.zeros(dims[p], dtype=np.float32) for p in PATHWAYS}
    f_text, f_img, f_mm, f_cap = zeros["text"], zeros["img"], zeros["multimodal"], zeros["caption"]
    if mask.use_text:
        f_text = np.concatenate([hub.text_cls(article.text, enc.TEXT_INDIC),
                                 hub.text_cls(article.text_en, enc.TEXT_ENGLISH)])
    if mask.use_image:
        f_img = np.concatenate([hub.image_vector(img, enc.IMAGE_CONV),
                                hub.image_vector(img, enc.IMAGE_PATCH)])
    if mask.use_multimodal:
        f_mm = hub.multimodal_vector(article.text_en, img)
    if mask.use_caption:
        f_cap = hub.caption_vector(img, article.id)
    return FeatureBundle(f_text, f_img, f_mm, f_cap, mask)


# ---------------------------------------------------------------------------
# parameters

@dataclass
class ClassifierParams:
    dims: dict[str, int]
    P: int = 256
    H: int = 256
    n_hidden: int = 1
    dropout: float = 0.2
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        expected = self.expected_shapes()
        for name, arr in self.arrays.items():
            if name not in expected:
                raise ShapeError(f"unexpected parameter {name}")
            if arr.shape != expected[name]:
                raise ShapeError(f"parameter {name}: expected shape {expected[name]}, found {arr.shape}")

    def expected_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {}
        for p in PATHWAYS:
            shapes[f"proj.{p}.W"] = (self.dims[p], self.P)
            shapes[f"proj.{p}.b"] = (self.P,)
        fan_in = 4 * self.P
        for i in range(self.n_hidden):
            shapes[f"hidden{i}.W"] = (fan_in, self.H)
            shapes[f"hidden{i}.b"] = (self.H,)
            fan_in = self.H
        shapes["out.W"] = (fan_in,)
        shapes["out.b"] = (1,)
        return shapes

    @classmethod
    def initialize(cls, dims: Mapping[str, int], seed: int, P: int = 256, H: int = 256,
                   n_hidden: int = 1, dropout: float = 0.2) -> "ClassifierParams":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias."""
        params = cls(dict(dims), P, H, n_hidden, dropout)
        rng = np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))
        for name, shape in params.expected_shapes().items():
            layer = name.rsplit(".", 1)[0]
            fan_in = params.expected_shapes()[f"{layer}.W"][0]
            bound = 1.0 / np.sqrt(fan_in)
            params.arrays[name] = rng.uniform(-bound, bound, size=shape)
        return params

    @classmethod
    def zeros(cls, dims: Mapping[str, int], P: int = 256, H: int = 256, n_hidden: int = 1,
              dropout: float = 0.2) -> "ClassifierParams":
        params = cls(dict(dims), P, H, n_hidden, dropout)
        params.arrays = {n: np.zeros(s) for n, s in params.expected_shapes().items()}
        return params

    def copy(self) -> "ClassifierParams":
        return replace(self, dims=dict(self.dims), arrays={k: v.copy() for k, v in self.arrays.items()})

    def config(self) -> dict:
        return {"dims": dict(self.dims), "P": self.P, "H": self.H,
                "n_hidden": self.n_hidden, "dropout": self.dropout}

    def check_finite(self) -> None:
        for name, arr in self.arrays.items():
            if not np.all(np.isfinite(arr)):
                raise NumericalError(f"numerical overflow: non-finite values in {name}")


# ---------------------------------------------------------------------------
# batched forward / backward

Batch = dict[str, np.ndarray]


def stack_bundles(bundles: Sequence[FeatureBundle]) -> tuple[Batch, PathwayMask]:
    if not bundles:
        raise ValueError("empty bundle list")
    mask = bundles[0].mask
    for b in bundles[1:]:
        mask = mask & b.mask
    return {p: np.stack([b.vector(p) for b in bundles]).astype(np.float32) for p in PATHWAYS}, mask


def check_dims(batch: Batch, params: ClassifierParams) -> None:
    for p in PATHWAYS:
        got = batch[p].shape[1]
        if got != params.dims[p]:
            raise ShapeError(f"pathway {p}: feature dim {got} does not match classifier dim {params.dims[p]}")


def _relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _dropout_mask(rng, shape, rate):
    keep = 1.0 - rate
    return (rng.random(shape) < keep) / keep


@dataclass
class ForwardCache:
    agg: np.ndarray
    proj_pre: dict[str, np.ndarray]
    proj_drop: dict[str, np.ndarray | None]
    hidden_in: list[np.ndarray]
    hidden_pre: list[np.ndarray]
    hidden_drop: list[np.ndarray | None]
    last: np.ndarray
    logits: np.ndarray


def forward(batch: Batch, params: ClassifierParams, mask: PathwayMask = FULL_MASK,
            training: bool = False, rng: np.random.Generator | None = None) -> ForwardCache:
    check_dims(batch, params)
    use_dropout = training and params.dropout > 0.0
    if use_dropout and rng is None:
        raise ValueError("training-mode forward needs an rng for dropout")
    a = params.arrays
    n = next(iter(batch.values())).shape[0]
    pieces, proj_pre, proj_drop = [], {}, {}
    for p in PATHWAYS:
        if not mask.enabled(p):
            # disabled pathways contribute an exact zero block
            proj_pre[p], proj_drop[p] = None, None
            pieces.append(np.zeros((n, params.P)))
            continue
        z = batch[p] @ a[f"proj.{p}.W"] + a[f"proj.{p}.b"]
        h = _relu(z)
        d = _dropout_mask(rng, h.shape, params.dropout) if use_dropout else None
        if d is not None:
            h = h * d
        proj_pre[p], proj_drop[p] = z, d
        pieces.append(h)
    agg = np.concatenate(pieces, axis=1)
    h = agg
    hidden_in, hidden_pre, hidden_drop = [], [], []
    for i in range(params.n_hidden):
        hidden_in.append(h)
        z = h @ a[f"hidden{i}.W"] + a[f"hidden{i}.b"]
        h = _relu(z)
        d = _dropout_mask(rng, h.shape, params.dropout) if use_dropout else None
        if d is not None:
            h = h * d
        hidden_pre.append(z)
        hidden_drop.append(d)
    with np.errstate(over="ignore", invalid="ignore"):
        logits = h @ a["out.W"] + a["out.b"][0]
    if not np.all(np.isfinite(logits)):
        raise NumericalError("numerical overflow")
    return ForwardCache(agg, proj_pre, proj_drop, hidden_in, hidden_pre, hidden_drop, h, logits)


def bce(y: np.ndarray, p_real: np.ndarray) -> np.ndarray:
    """Element-wise negated binary cross-entropy with probabilities clamped to [eps, 1-eps]."""
    y = np.asarray(y)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    p = np.clip(np.asarray(p_real, dtype=np.float64), EPS, 1.0 - EPS)
    return -(y * np.log(p) + (1 - y) * np.log(1.0 - p))


def bce_loss(y: int | np.ndarray, p_real: float | np.ndarray) -> float:
    """Mean BCE over the batch (a scalar for a single example)."""
    return float(np.mean(bce(np.atleast_1d(y), np.atleast_1d(p_real))))


def loss_and_grads(batch: Batch, y: np.ndarray, params: ClassifierParams,
                   mask: PathwayMask = FULL_MASK, training: bool = False,
                   rng: np.random.Generator | None = None) -> tuple[float, dict[str, np.ndarray], ForwardCache]:
    """Mean BCE and its exact gradient with respect to every parameter array."""
    fc = forward(batch, params, mask, training, rng)
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    p = sigmoid(fc.logits)
    loss = float(np.mean(bce(y, p)))
    # d(mean loss)/d(logit); zero where the clamp is active
    inside = (p > EPS) & (p < 1.0 - EPS)
    g = np.where(inside, p - y, 0.0) / n
    a = params.arrays
    grads: dict[str, np.ndarray] = {"out.W": fc.last.T @ g, "out.b": np.array([g.sum()])}
    dh = np.outer(g, a["out.W"])
    for i in reversed(range(params.n_hidden)):
        if fc.hidden_drop[i] is not None:
            dh = dh * fc.hidden_drop[i]
        dz = dh * (fc.hidden_pre[i] > 0)
        grads[f"hidden{i}.W"] = fc.hidden_in[i].T @ dz
        grads[f"hidden{i}.b"] = dz.sum(axis=0)
        dh = dz @ a[f"hidden{i}.W"].T
    P = params.P
    for k, pw in enumerate(PATHWAYS):
        if fc.proj_pre[pw] is None:
            grads[f"proj.{pw}.W"] = np.zeros_like(a[f"proj.{pw}.W"])
            grads[f"proj.{pw}.b"] = np.zeros_like(a[f"proj.{pw}.b"])
            continue
        d = dh[:, k * P:(k + 1) * P]
        if fc.proj_drop[pw] is not None:
            d = d * fc.proj_drop[pw]
        dz = d * (fc.proj_pre[pw] > 0)
        grads[f"proj.{pw}.W"] = batch[pw].T @ dz
        grads[f"proj.{pw}.b"] = dz.sum(axis=0)
    return loss, grads, fc


# ---------------------------------------------------------------------------
# single-example API and predictions

@dataclass(frozen=True)
class Prediction:
    p_real: float
    label: int
    logits: float


def _as_batch(bundle: FeatureBundle) -> Batch:
    return {p: bundle.vector(p).astype(np.float64)[None, :] for p in PATHWAYS}


def project_and_aggregate(bundle: FeatureBundle, params: ClassifierParams, training: bool = False,
                          rng: np.random.Generator | None = None) -> np.ndarray:
    """Per-pathway affine + ReLU (+ dropout), concatenated in aggregation order; length 4*P."""
    for p in PATHWAYS:
        if bundle.vector(p).size != params.dims[p]:
            raise ShapeError(f"pathway {p}: expected dim {params.dims[p]}, got {bundle.vector(p).size}")
    pieces = []
    for p in PATHWAYS:
        if not bundle.mask.enabled(p):
            pieces.append(np.zeros(params.P))
            continue
        h = _relu(bundle.vector(p).astype(np.float64) @ params.arrays[f"proj.{p}.W"]
                  + params.arrays[f"proj.{p}.b"])
        if training and params.dropout > 0:
            h = h * _dropout_mask(rng, h.shape, params.dropout)
        pieces.append(h)
    return np.concatenate(pieces)


def classify_forward(agg: np.ndarray, params: ClassifierParams, training: bool = False,
                     rng: np.random.Generator | None = None, threshold: float = 0.5) -> Prediction:
    agg = np.asarray(agg, dtype=np.float64)
    if agg.shape != (4 * params.P,):
        raise ShapeError(f"aggregate must have length {4 * params.P}, got {agg.shape}")
    params.check_finite()
    h = agg
    for i in range(params.n_hidden):
        h = _relu(h @ params.arrays[f"hidden{i}.W"] + params.arrays[f"hidden{i}.b"])
        if training and params.dropout > 0:
            h = h * _dropout_mask(rng, h.shape, params.dropout)
    with np.errstate(over="ignore", invalid="ignore"):
        logit = float(h @ params.arrays["out.W"] + params.arrays["out.b"][0])
    if not np.isfinite(logit):
        raise NumericalError("numerical overflow")
    p = float(sigmoid(np.array([logit]))[0])
    return Prediction(p, int(p >= threshold), logit)


def predictions_from_logits(logits: np.ndarray, threshold: float = 0.5) -> list[Prediction]:
    probs = sigmoid(logits)
    return [Prediction(float(p), int(p >= threshold), float(z)) for p, z in zip(probs, logits)]


@dataclass
class FusionModel:
    """Classifier parameters plus the encoders and mask that feed them."""

    params: ClassifierParams
    hub: enc.EncoderHub | None = None
    mask: PathwayMask = FULL_MASK
    threshold: float = 0.5

    def build_feature_bundle(self, article: NewsArticle, img: np.ndarray | None) -> FeatureBundle:
        if self.hub is None:
            raise EncoderError("model has no encoder hub attached")
        return build_feature_bundle(article, img, self.hub, self.mask)

    def predict_batch(self, batch: Batch, batch_mask: PathwayMask = FULL_MASK,
                      chunk: int = 1024) -> list[Prediction]:
        mask = self.mask & batch_mask
        n = next(iter(batch.values())).shape[0]
        out: list[Prediction] = []
        for start in range(0, n, chunk):
            part = {p: v[start:start + chunk] for p, v in batch.items()}
            out.extend(predictions_from_logits(forward(part, self.params, mask).logits, self.threshold))
        return out

    def predict(self, bundles: Sequence[FeatureBundle]) -> list[Prediction]:
        if not bundles:
            return []
        batch, mask = stack_bundles(bundles)
        return self.predict_batch(batch, mask)

    def predict_article(self, article: NewsArticle, img: np.ndarray | None) -> Prediction:
        return self.predict([self.build_feature_bundle(article, img)])[0]


def apply_pathway_mask(model: FusionModel, mask: PathwayMask) -> FusionModel:
    if not isinstance(mask, PathwayMask):
        raise TypeError("mask must be a PathwayMask")
    return replace(model, mask=mask)
