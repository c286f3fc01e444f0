import numpy as np
import pytest

from tempofeat.data import load_dataset
from tempofeat.datagen import GenConfig, generate


@pytest.fixture(scope="session")
def small_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("small")
    generate(GenConfig(n_users=400, n_branches=8, k_true=4, seed=3, missing_rate=0.02), out)
    return out


@pytest.fixture(scope="session")
def small_ds(small_dir):
    return load_dataset(small_dir)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
