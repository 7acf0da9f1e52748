import numpy as np
import pytest

from pcgkit.synthetic import train_default_emission_model


@pytest.fixture(scope="session")
def emission_model():
    """Shared default emission model (process-cached, deterministic)."""
    return train_default_emission_model(0)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260822)
