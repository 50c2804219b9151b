import numpy as np
import pytest

from nfe import (generate_synthetic, init_params, split, train, TrainConfig)


@pytest.fixture(scope="session")
def scenario():
    """The pinned synthetic acceptance scenario, trained once per session."""
    eset = generate_synthetic(20, 12, 16, 0.05, 1)
    train_set, test_set = split(eset, 10 / 12, 1)
    initial = init_params([16, 12, 8], 1)
    trained, history = train(initial, train_set, TrainConfig(seed=1))
    return dict(eset=eset, train=train_set, test=test_set, initial=initial,
                trained=trained, history=history)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
