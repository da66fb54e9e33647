import json

import numpy as np
import pytest

from config_handler import SynthConfig, TrainConfig
from dataset_handler import InteractionGraph, SplitDataset, split
from model.numeric import RngStream
from pipeline import synthgen

SMALL_SYNTH = SynthConfig(n_users=40, n_items=30, n_causal_neighbors=3, latent_dim=4, k_range=(5, 10), n_exogenous=1)
SMALL_TRAIN = TrainConfig(h_dim=6, latent_dim=4, n_layers=2, z_dim=2, batch_size=16, max_epochs=3, patience=20,
                          dropout=0.1, max_neighbors=5, learning_rate=0.01)
SYNTH_SEED = 3

SMALL_RUN_CONFIG = {
    "seed": 0,
    "synth": SMALL_SYNTH.to_dict(),
    "data": {"k_core": 1},
    "train": {"h_dim": 6, "latent_dim": 4, "z_dim": 2, "batch_size": 16, "max_epochs": 2, "max_neighbors": 5,
              "learning_rate": 0.01, "dropout": 0.1},
    "eval": {"grid": {"learning_rate": [0.01], "dropout": [0.0, 0.1]}},
}


@pytest.fixture
def toy_graph() -> InteractionGraph:
    """3 users and 3 items, node ids 0-2 are users and 3-5 items."""
    return InteractionGraph(
        n_users=3, n_items=3,
        user_features=np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]),
        item_features=np.array([[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]]),
        interactions=np.array([[0, 0], [0, 1], [1, 1], [1, 2], [2, 0], [2, 2]]),
        user_causal_adj=((1, 3), (0, 4), (1, 5)),
        item_causal_adj=((4, 0), (3, 1), (4, 2)),
    )


@pytest.fixture
def toy_splits(toy_graph) -> SplitDataset:
    """Every toy interaction in train."""
    empty = np.zeros((0, 2), dtype=np.int64)
    return SplitDataset(toy_graph, toy_graph.interactions, empty, empty)


@pytest.fixture(scope="session")
def small_synthetic() -> synthgen.SyntheticDataset:
    return synthgen.generate(SMALL_SYNTH, SYNTH_SEED)


@pytest.fixture(scope="session")
def small_splits(small_synthetic) -> SplitDataset:
    return split(small_synthetic.graph, (0.7, 0.1, 0.2), RngStream("split", 0))


@pytest.fixture
def small_train_cfg() -> TrainConfig:
    return SMALL_TRAIN


@pytest.fixture(scope="session")
def synthetic_dump(tmp_path_factory, small_synthetic):
    directory = tmp_path_factory.mktemp("synthetic")
    synthgen.dump_synthetic(small_synthetic, directory, SMALL_SYNTH, SYNTH_SEED)
    return directory


@pytest.fixture
def small_config_file(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(SMALL_RUN_CONFIG), encoding="utf-8")
    return path
