import numpy as np
import pytest

from mmfnd.config import RunConfig, make_hub
from mmfnd.dataset import IdentityTranslator, split_dataset
from mmfnd.pipeline import extract_features, prepare_dataset
from mmfnd.synthetic import make_synthetic_corpus


@pytest.fixture(scope="session")
def small_prepared(tmp_path_factory):
    """60 synthetic articles, prepared once per session."""
    root = tmp_path_factory.mktemp("small")
    make_synthetic_corpus(root / "raw", n=60, seed=3)
    result = prepare_dataset(root / "raw" / "manifest.jsonl", root / "prep", IdentityTranslator())
    return root / "prep", result.manifest


@pytest.fixture(scope="session")
def stub_hub(tmp_path_factory):
    return make_hub(RunConfig(), tmp_path_factory.mktemp("cache"))


@pytest.fixture(scope="session")
def small_features(small_prepared, stub_hub):
    _, manifest = small_prepared
    split = split_dataset(manifest)
    return (extract_features(manifest, stub_hub, ids=split.train_ids),
            extract_features(manifest, stub_hub, ids=split.test_ids))


def random_batch(rng, dims, n):
    return {p: rng.normal(size=(n, d)).astype(np.float32) for p, d in dims.items()}


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES):
            terminalreporter.write_line(line)
