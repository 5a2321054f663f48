import numpy as np
import pytest

from meaningful_boundaries.stats import estimate_regularity_model


@pytest.fixture(scope="session")
def regularity_model(tmp_path_factory):
    """H_s with the library defaults (s=5, 512x512 noise, sigma 50, seed 42, 1000 bins)."""
    cache = tmp_path_factory.mktemp("hs-cache")
    return estimate_regularity_model(cache_dir=cache)


@pytest.fixture(scope="session")
def small_regularity_model(tmp_path_factory):
    """Cheaper H_s learned on 128x128 noise, for tests that only need some model."""
    cache = tmp_path_factory.mktemp("hs-cache-small")
    return estimate_regularity_model(noise_size=128, cache_dir=cache)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
