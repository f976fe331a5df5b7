import numpy as np
import pytest

from mmfnd.checkpoint import from_bytes, load_checkpoint, save_checkpoint, to_bytes
from mmfnd.errors import CheckpointError, ConfigError, ShapeError
from mmfnd.fusion import PATHWAYS, TEXT_ONLY, ClassifierParams
from mmfnd.synthetic import plant_signal
from mmfnd.training import Adam, LabeledBatch, TrainConfig, TrainingDiverged, evaluate_on_split, train

MID_DIMS = {"text": 48, "img": 56, "multimodal": 32, "caption": 32}


def _noise_batch(n, seed, dims=MID_DIMS):
    rng = np.random.default_rng(seed)
    feats = {}
    for p, d in dims.items():
        v = rng.normal(size=(n, d))
        feats[p] = (v / np.linalg.norm(v, axis=1, keepdims=True)).astype(np.float32)
    labels = np.array([i % 2 for i in range(n)], dtype=np.int64)
    return LabeledBatch(feats, labels, ids=tuple(f"r{i}" for i in range(n)))


def _small_cfg(**kw):
    return TrainConfig(**{"P": 16, "H": 16, "epochs": 3, "batch_size": 32, **kw})


# --- optimiser ----------------------------------------------------------------

def test_adam_two_steps_by_hand():
    lr, b1, b2, eps = 1e-3, 0.9, 0.999, 1e-8
    w = {"w": np.array([1.0, -2.0, 0.5])}
    g1, g2 = np.array([0.3, -0.1, 0.0]), np.array([-0.2, 0.4, 1.0])
    opt = Adam(lr)
    opt.step(w, {"w": g1})
    opt.step(w, {"w": g2})
    expected = []
    for i, w0 in enumerate([1.0, -2.0, 0.5]):
        m = v = 0.0
        x = w0
        for t, g in ((1, g1[i]), (2, g2[i])):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            x -= lr * (m / (1 - b1 ** t)) / ((v / (1 - b2 ** t)) ** 0.5 + eps)
        expected.append(x)
    assert np.allclose(w["w"], expected, rtol=0, atol=1e-10)


# --- config -------------------------------------------------------------------

@pytest.mark.parametrize("field, value", [("batch_size", 0), ("learning_rate", -1.0), ("epochs", -1),
                                          ("dropout", 1.0), ("optimizer", "sgd"), ("threshold", 1.0)])
def test_config_validation_names_field(field, value):
    with pytest.raises(ConfigError, match=f"'{field}'"):
        TrainConfig(**{field: value})


def test_config_json_roundtrip():
    cfg = TrainConfig(mask=TEXT_ONLY, seed=9)
    assert TrainConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ConfigError, match="unknown"):
        TrainConfig.from_json({"bogus": 1})


# --- training -----------------------------------------------------------------

def test_zero_epochs_returns_init():
    data = _noise_batch(20, 0)
    ckpt, log = train(data, _small_cfg(epochs=0, seed=5))
    init = ClassifierParams.initialize(MID_DIMS, 5, P=16, H=16)
    assert len(log) == 0 and ckpt.epoch == 0
    for name, arr in init.arrays.items():
        assert np.array_equal(ckpt.params.arrays[name], arr.astype(np.float32).astype(np.float64))


def test_training_is_deterministic():
    data = _noise_batch(90, 1)
    a, log_a = train(data, _small_cfg(seed=3))
    b, log_b = train(data, _small_cfg(seed=3))
    assert to_bytes(a) == to_bytes(b)
    assert log_a.losses == log_b.losses
    c, _ = train(data, _small_cfg(seed=4))
    assert to_bytes(c) != to_bytes(a)


def test_partial_batch_kept():
    data = _noise_batch(33, 2)
    _, log = train(data, _small_cfg(batch_size=32, epochs=1))
    assert len(log) == 1 and np.isfinite(log.losses[0])


def test_empty_training_set():
    with pytest.raises(ValueError):
        train(_noise_batch(4, 0).empty_like(), _small_cfg())


def test_divergence_reports_last_good_checkpoint():
    data = _noise_batch(40, 3)
    data.features["text"][0, 0] = np.float32(3e38)
    with pytest.raises(TrainingDiverged) as info:
        train(data, _small_cfg(learning_rate=1e200))
    good = info.value.checkpoint
    assert all(np.all(np.isfinite(a)) for a in good.params.arrays.values())


def test_planted_signal_learned_with_separability_oracle():
    # 0.3 on these ~50-dim unit features is about the margin 0.05 gives at 768+ dims
    from sklearn.linear_model import LogisticRegression

    tr = plant_signal(_noise_batch(400, 10), 0.3)
    te = plant_signal(_noise_batch(100, 11), 0.3)
    flat = lambda d: np.hstack([d.features[p] for p in PATHWAYS])
    oracle = LogisticRegression(max_iter=2000).fit(flat(tr), tr.labels).score(flat(te), te.labels)
    assert oracle >= 0.95
    ckpt, _ = train(tr, TrainConfig(P=32, H=32, epochs=10))
    acc = np.mean(np.array([p.label for p in evaluate_on_split(ckpt, te)]) == te.labels)
    assert acc >= 0.95


def test_loss_non_increasing_in_most_seeds():
    data = plant_signal(_noise_batch(300, 12), 0.3)
    monotone = 0
    for seed in range(10):
        _, log = train(data, TrainConfig(P=32, H=32, epochs=10, seed=seed))
        losses = log.losses
        monotone += all(b <= a for a, b in zip(losses, losses[1:]))
    assert monotone >= 9


def test_evaluate_dim_mismatch():
    ckpt, _ = train(_noise_batch(20, 0), _small_cfg(epochs=1))
    other = _noise_batch(5, 0, {**MID_DIMS, "img": 10})
    with pytest.raises(ShapeError, match="img"):
        evaluate_on_split(ckpt, other)
    assert evaluate_on_split(ckpt, other.empty_like()) == []


# --- checkpoints --------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path):
    ckpt, _ = train(_noise_batch(30, 4), _small_cfg(mask=TEXT_ONLY))
    path = save_checkpoint(ckpt, tmp_path / "m.ckpt")
    back = load_checkpoint(path)
    assert back.mask == TEXT_ONLY and back.epoch == ckpt.epoch and back.metrics == ckpt.metrics
    for name, arr in ckpt.params.arrays.items():
        assert np.array_equal(back.params.arrays[name], arr)
    assert to_bytes(back) == path.read_bytes()


def test_truncated_checkpoint(tmp_path):
    ckpt, _ = train(_noise_batch(30, 4), _small_cfg(epochs=1))
    blob = to_bytes(ckpt)
    for cut in (4, len(blob) // 2, len(blob) - 1):
        with pytest.raises(CheckpointError, match="corrupt checkpoint"):
            from_bytes(blob[:cut])


def test_checkpoint_expectation_mismatch():
    ckpt, _ = train(_noise_batch(30, 4), _small_cfg(epochs=1))
    blob = to_bytes(ckpt)
    with pytest.raises(CheckpointError, match=r"expected shape \(48, 256\), found \(48, 16\)"):
        from_bytes(blob, {"P": 256})
    with pytest.raises(CheckpointError, match="H=8"):
        from_bytes(blob, {"H": 8})
