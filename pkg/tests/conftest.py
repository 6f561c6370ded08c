"""Shared fixtures: synthetic datasets and toy-trained models.

The heavyweight ones are session-scoped; training is deterministic, so
every test sees identical models.
"""

import pytest

from cyclepgd import (
    AttackConfig,
    LinearSoftmaxClassifier,
    MlpClassifier,
    generate_synthetic_dataset,
)


@pytest.fixture(scope="session")
def blobs64():
    return generate_synthetic_dataset("blobs", 500, 64, 4, seed=7)


@pytest.fixture(scope="session")
def mlp64(blobs64):
    model = MlpClassifier(n_classes=4, hidden=32, activation="relu", seed=0)
    return model.fit(blobs64.X, blobs64.y)


@pytest.fixture(scope="session")
def blobs16():
    return generate_synthetic_dataset("blobs", 160, 16, 4, seed=11)


@pytest.fixture(scope="session")
def mlp16(blobs16):
    model = MlpClassifier(n_classes=4, hidden=16, activation="relu", seed=1)
    return model.fit(blobs16.X, blobs16.y)


@pytest.fixture(scope="session")
def blobs2():
    return generate_synthetic_dataset("blobs", 200, 32, 2, seed=2)


@pytest.fixture(scope="session")
def linear2(blobs2):
    return LinearSoftmaxClassifier(n_classes=2).fit(blobs2.X, blobs2.y)


@pytest.fixture
def cfg64():
    return AttackConfig(eps=0.1, t_iter=1000, seed=3)


@pytest.fixture
def cfg16():
    return AttackConfig(eps=0.06, t_iter=1000, seed=5)
