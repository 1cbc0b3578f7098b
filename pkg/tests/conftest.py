import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from arcfault import nn, synth, train
from arcfault.dataio import FeatureDataset, featurize_traces
from arcfault.features import FeatureConfig
from arcfault.rng import make_rng

TINY_ARCH = nn.ArchSpec(conv_blocks=((3, 4, 2),), dropout_p=0.1, fc_hidden=8,
                        input_dim=16)


def blob_dataset(n: int = 400, dim: int = 16, seed: int = 0,
                 separation: float = 4.0) -> FeatureDataset:
    """Two well-separated Gaussian blobs; linearly separable by design."""
    rng = make_rng(seed)
    half = n // 2
    x0 = rng.standard_normal((half, dim)) - separation / 2
    x1 = rng.standard_normal((n - half, dim)) + separation / 2
    x = np.concatenate([x0, x1]).astype(np.float32)
    y = np.concatenate([np.zeros(half), np.ones(n - half)]).astype(np.uint8)
    perm = rng.permutation(n)
    return FeatureDataset(x[perm], y[perm], FeatureConfig())


@pytest.fixture(scope="session")
def feat_config() -> FeatureConfig:
    return FeatureConfig()


@pytest.fixture(scope="session")
def small_suite(feat_config):
    """Compact two-profile suite for integration-level unit tests."""
    manifest, traces = synth.synth_suite(
        [synth.DEFAULT_PROFILE_A, synth.DEFAULT_PROFILE_B],
        per_category_count=1, seed=11, duration=0.2,
    )
    dataset = featurize_traces(traces, feat_config)
    return manifest, traces, dataset


@pytest.fixture(scope="session")
def small_model(small_suite):
    """A detector trained quickly on the small suite."""
    _, _, dataset = small_suite
    result = train.train(
        dataset, nn.ArchSpec(),
        train.TrainConfig(epochs=15, folds=1, split_seed=5),
    )
    return result.model
