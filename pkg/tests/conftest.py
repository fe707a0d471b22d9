import pytest

from commonground.config import TrainConfig
from commonground.dataset import load_dataset
from commonground.synthetic import SyntheticSpec, generate

TINY_SPEC = SyntheticSpec(concepts=4, grid=4, levels=2, samples=24, seed=11, sigma=0.05)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """A small planted corpus shared by trainer/evaluation/CLI tests."""
    out = tmp_path_factory.mktemp("tinyset")
    index_path = generate(TINY_SPEC, str(out))
    return load_dataset(index_path)


@pytest.fixture(scope="session")
def tiny_dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("tinyset_cli")
    return str(out), generate(TINY_SPEC, str(out))


def tiny_train_config(**overrides) -> TrainConfig:
    base = dict(
        batch_size=6,
        epochs=3,
        learning_rate=0.001,
        common_dim=16,
        grid_size=4,
        seed=5,
    )
    base.update(overrides)
    return TrainConfig(**base)
