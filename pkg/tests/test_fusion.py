import math

import numpy as np
import pytest

from mmfnd import encoders as enc
from mmfnd.dataset import NewsArticle
from mmfnd.errors import EncoderError, NumericalError, ShapeError
from mmfnd.fusion import (FULL_MASK, PATHWAYS, TEXT_ONLY, ClassifierParams, FeatureBundle, FusionModel,
                          PathwayMask, apply_pathway_mask, bce_loss, build_feature_bundle,
                          classify_forward, forward, pathway_dims, project_and_aggregate, sigmoid)

from conftest import random_batch
from gradcheck import SMALL_DIMS, make_instance, max_relative_error

STUB_DIMS = {"text": 1536, "img": 1792, "multimodal": 768, "caption": 768}


def _article():
    return NewsArticle("a1", "hi", "कुछ खबर", 1, text_en="some news")


def _img():
    return np.random.default_rng(0).random(enc.IMAGE_SHAPE, dtype=np.float32)


def test_pathway_dims(stub_hub):
    assert pathway_dims(stub_hub) == STUB_DIMS


def test_bundle_layout(stub_hub):
    b = build_feature_bundle(_article(), _img(), stub_hub)
    assert b.dims == STUB_DIMS
    assert np.array_equal(b.f_text[:768], stub_hub.text_cls("कुछ खबर", enc.TEXT_INDIC))
    assert np.array_equal(b.f_text[768:], stub_hub.text_cls("some news", enc.TEXT_ENGLISH))
    assert np.array_equal(b.f_img[:1024], stub_hub.image_vector(_img(), enc.IMAGE_CONV))
    assert np.array_equal(b.f_img[1024:], stub_hub.image_vector(_img(), enc.IMAGE_PATCH))


def test_disabled_pathways_skip_encoders():
    class Exploding:
        def __init__(self, role):
            self.descriptor = enc.stub_backend(role).descriptor
            self.vocab = enc.StubVocab()

        def encode(self, *args):
            raise AssertionError("disabled encoder was called")

        generate = encode

    backends = enc.stub_backends()
    for role in (enc.IMAGE_CONV, enc.IMAGE_PATCH, enc.MULTIMODAL, enc.CAPTION_GEN, enc.CAPTION_TEXT):
        backends[role] = Exploding(role)
    b = build_feature_bundle(_article(), None, enc.EncoderHub(backends), TEXT_ONLY)
    assert not b.f_img.any() and not b.f_multimodal.any() and not b.f_caption.any()
    assert b.f_text.any()


def test_missing_inputs_raise(stub_hub):
    with pytest.raises(EncoderError, match="image"):
        build_feature_bundle(_article(), None, stub_hub)
    no_en = NewsArticle("a2", "hi", "x", 0)
    with pytest.raises(EncoderError, match="text_en"):
        build_feature_bundle(no_en, _img(), stub_hub)


def test_mask_validation_and_intersection():
    with pytest.raises(ValueError):
        PathwayMask(False, False, False, False)
    assert (FULL_MASK & TEXT_ONLY) == TEXT_ONLY
    assert PathwayMask.from_json(TEXT_ONLY.to_json()) == TEXT_ONLY


def test_zero_weights_give_half_and_real():
    params = ClassifierParams.zeros(SMALL_DIMS, P=4, H=4)
    agg = project_and_aggregate(FeatureBundle(*(np.ones(SMALL_DIMS[p]) for p in PATHWAYS)), params)
    assert agg.shape == (16,) and not agg.any()
    pred = classify_forward(agg, params)
    assert pred.p_real == 0.5 and pred.label == 1


def test_sigmoid_values():
    s = sigmoid(np.array([-10.0, 0.0, 10.0, -800.0, 800.0]))
    assert s[0] == pytest.approx(1 / (1 + math.exp(10)), rel=1e-15)
    assert s[1] == 0.5
    assert s[2] == pytest.approx(1 / (1 + math.exp(-10)), rel=1e-15)
    assert s[3] == 0.0 and s[4] == 1.0


def test_bce_values():
    assert bce_loss(1, 0.5) == pytest.approx(math.log(2), rel=1e-15)
    assert bce_loss(0, 0.5) == pytest.approx(math.log(2), rel=1e-15)
    assert bce_loss(1, 0.0) == pytest.approx(-math.log(1e-7), rel=1e-12)
    assert bce_loss(np.array([1, 0]), np.array([0.9, 0.2])) == pytest.approx(
        -(math.log(0.9) + math.log(0.8)) / 2, rel=1e-15)
    with pytest.raises(ValueError):
        bce_loss(2, 0.5)


@pytest.mark.parametrize("seed", range(3))
def test_gradients_eval_mode(seed):
    params, batch, y, mask = make_instance(seed)
    assert max_relative_error(params, batch, y, mask) < 1e-4


def test_gradients_with_dropout_and_depth():
    params, batch, y, mask = make_instance(11, dropout=0.3, n_hidden=2)
    assert max_relative_error(params, batch, y, mask, dropout_seed=5) < 1e-4


def test_gradients_masked():
    params, batch, y, _ = make_instance(4)
    mask = PathwayMask(use_caption=False, use_text=True, use_image=False, use_multimodal=True)
    assert max_relative_error(params, batch, y, mask) < 1e-4


def test_batch_equivariance():
    rng = np.random.default_rng(0)
    params = ClassifierParams.initialize(SMALL_DIMS, 0, P=8, H=8)
    batch = random_batch(rng, SMALL_DIMS, 7)
    full = forward(batch, params).logits
    perm = rng.permutation(7)
    permuted = forward({p: v[perm] for p, v in batch.items()}, params).logits
    # BLAS may round differently per row position
    assert np.allclose(full[perm], permuted, rtol=0, atol=1e-12)
    singles = [forward({p: v[i:i + 1] for p, v in batch.items()}, params).logits[0] for i in range(7)]
    assert np.allclose(full, singles, rtol=0, atol=1e-12)


def test_single_example_path_agrees_with_batch():
    rng = np.random.default_rng(1)
    params = ClassifierParams.initialize(SMALL_DIMS, 1, P=8, H=8)
    batch = random_batch(rng, SMALL_DIMS, 1)
    bundle = FeatureBundle(*(batch[p][0] for p in PATHWAYS))
    single = classify_forward(project_and_aggregate(bundle, params), params)
    assert single.logits == pytest.approx(forward(batch, params).logits[0], abs=1e-12)


def test_dim_mismatch_raises():
    params = ClassifierParams.initialize(SMALL_DIMS, 0, P=4, H=4)
    bad = {**{p: np.zeros((2, d)) for p, d in SMALL_DIMS.items()}, "img": np.zeros((2, 99))}
    with pytest.raises(ShapeError, match="img"):
        forward(bad, params)


def test_overflow_raises():
    params = ClassifierParams.initialize(SMALL_DIMS, 0, P=4, H=4)
    params.arrays["out.W"][:] = 1e308
    params.arrays["hidden0.b"][:] = 1e10
    with pytest.raises(NumericalError, match="numerical overflow"):
        forward({p: np.ones((1, d)) for p, d in SMALL_DIMS.items()}, params)


def test_model_mask_zeroes_pathways():
    rng = np.random.default_rng(2)
    params = ClassifierParams.initialize(SMALL_DIMS, 2, P=8, H=8)
    model = apply_pathway_mask(FusionModel(params), TEXT_ONLY)
    batch = random_batch(rng, SMALL_DIMS, 4)
    base = [p.logits for p in model.predict_batch(batch)]
    for p in ("img", "multimodal", "caption"):
        batch[p] = rng.normal(size=batch[p].shape) * 100
    assert [p.logits for p in model.predict_batch(batch)] == base
    with pytest.raises(TypeError):
        apply_pathway_mask(model, {"use_text": True})
