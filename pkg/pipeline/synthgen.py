"""
Synthetic dataset with known preference structure.

Generation runs in four steps, each on its own named random stream:
node features, causal neighbor sampling, Gaussian preference vectors and
top-k interaction sampling.
"""
import logging
from pathlib import Path
from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

import dataset_handler
from config_handler import SynthConfig
from dataset_handler import InteractionGraph
from helpers import misc
from helpers.errors import DataError
from model.numeric import RngStream, RngStreams, softmax

logger = logging.getLogger(__name__)

USER_COLUMNS = ("gender", "income")
ITEM_COLUMNS = ("type", "brand", "location")
INCOME_RANGE = (0.0, 1000.0)
GROUND_TRUTH_FILE = "ground_truth.csv"
USER_VECTORS_FILE = "user_vectors.csv"
ITEM_VECTORS_FILE = "item_vectors.csv"

Adjacency = List[Tuple[int, ...]]


@dataclass(frozen=True)
class SyntheticDataset:
    graph: InteractionGraph
    user_vectors: np.ndarray
    item_vectors: np.ndarray
    normalized_scores: np.ndarray

    @property
    def scores(self) -> np.ndarray:
        return self.user_vectors @ self.item_vectors.T


def generate_features(cfg: SynthConfig, rng: RngStream) -> Tuple[np.ndarray, np.ndarray]:
    """
    Users get gender ~ Bernoulli(0.5) and income ~ U[0, 1000]; items get type, brand and
    location ~ Bernoulli(0.5). Every node also gets cfg.n_exogenous N(0, 1) columns.
    :return: (user_features, item_features)
    """
    gender = rng.bernoulli(0.5, (cfg.n_users, 1))
    income = rng.uniform(*INCOME_RANGE, (cfg.n_users, 1))
    properties = rng.bernoulli(0.5, (cfg.n_items, len(ITEM_COLUMNS)))
    user_exogenous = rng.normal((cfg.n_users, cfg.n_exogenous))
    item_exogenous = rng.normal((cfg.n_items, cfg.n_exogenous))
    return (np.hstack([gender, income, user_exogenous]),
            np.hstack([properties, item_exogenous]))


def sample_causal_neighbors(cfg: SynthConfig, item_features: np.ndarray,
                            rng: RngStream) -> Tuple[Adjacency, Adjacency]:
    """
    Users: cfg.n_causal_neighbors other users uniformly at random without replacement.
    Items: the cfg.n_causal_neighbors items closest in Euclidean distance over the item
    property columns, ties by ascending id. Item neighbors are item node ids (n_users + j).
    """
    n_c = cfg.n_causal_neighbors
    user_adj = []
    for user in range(cfg.n_users):
        picks = rng.choice(cfg.n_users - 1, n_c, replace=False)
        picks = np.where(picks >= user, picks + 1, picks)
        user_adj.append(tuple(int(p) for p in picks))

    properties = item_features[:, :len(ITEM_COLUMNS)]
    distances = cdist(properties, properties, metric="euclidean")
    np.fill_diagonal(distances, np.inf)
    item_adj = []
    for item in range(cfg.n_items):
        closest = np.argsort(distances[item], kind="stable")[:n_c]
        item_adj.append(tuple(cfg.n_users + int(j) for j in closest))
    return user_adj, item_adj


def estimate_preferences(cfg: SynthConfig, rng: RngStream) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    :return: (scores, user_vectors, item_vectors) with u, v ~ N(0, I_d) and scores[u, v] = <u, v>
    """
    user_vectors = rng.normal((cfg.n_users, cfg.latent_dim))
    item_vectors = rng.normal((cfg.n_items, cfg.latent_dim))
    return user_vectors @ item_vectors.T, user_vectors, item_vectors


def sample_interactions(cfg: SynthConfig, scores: np.ndarray, rng: RngStream) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per user: softmax-normalize the score row, draw k uniformly from cfg.k_range and keep the
    k items with the highest score. Softmax is monotone, so the top-k is taken on raw scores.
    :return: (interaction pairs sorted by user then item, softmax-normalized scores)
    """
    if not np.all(np.isfinite(scores)):
        raise DataError("Preference scores must be finite")
    normalized = softmax(scores, axis=-1).numpy()
    low, high = cfg.k_range
    counts = rng.integers(low, high + 1, scores.shape[0])
    pairs = []
    for user, k in enumerate(counts):
        top = np.argsort(-scores[user], kind="stable")[:int(k)]
        pairs.extend((user, int(item)) for item in sorted(top))
    return np.array(pairs, dtype=np.int64).reshape(-1, 2), normalized


def generate(cfg: SynthConfig, seed: int) -> SyntheticDataset:
    """
    Runs all four steps. Every node is kept, including items no user picked, so each
    causal list keeps its n_causal_neighbors entries.
    """
    streams = RngStreams(seed)
    user_features, item_features = generate_features(cfg, streams["features"])
    user_adj, item_adj = sample_causal_neighbors(cfg, item_features, streams["neighbors"])
    scores, user_vectors, item_vectors = estimate_preferences(cfg, streams["preferences"])
    pairs, normalized = sample_interactions(cfg, scores, streams["interactions"])

    graph = InteractionGraph(cfg.n_users, cfg.n_items, user_features, item_features, pairs,
                             tuple(user_adj), tuple(item_adj))
    _, item_degree = graph.degrees()
    isolated = int(np.count_nonzero(item_degree == 0))
    if isolated:
        logger.info(f"{isolated} synthetic items received no interaction")
    logger.info(f"Generated synthetic dataset: {graph.statistics()}")
    return SyntheticDataset(graph, user_vectors, item_vectors, normalized)


def dump_synthetic(dataset: SyntheticDataset, directory: Union[str, Path], cfg: SynthConfig, seed: int) -> Path:
    """
    Canonical dump plus ground_truth.csv (score of every interacted pair) and the latent vectors.
    """
    directory = Path(directory)
    graph = dataset.graph
    manifest = {"source": "synthetic", "seed": seed, "synth": cfg.to_dict(),
                "rating_threshold": 0.0}
    dataset_handler.dump_graph(graph, directory, manifest)

    users, items = graph.interactions[:, 0], graph.interactions[:, 1]
    scores = np.einsum("ij,ij->i", dataset.user_vectors[users], dataset.item_vectors[items])
    pd.DataFrame({"user_id": [graph.user_ids[u] for u in users],
                  "item_id": [graph.item_ids[i] for i in items],
                  "score": scores,
                  "normalized_score": dataset.normalized_scores[users, items]}
                 ).to_csv(directory / GROUND_TRUTH_FILE, index=False)
    _write_vectors(dataset.user_vectors, graph.user_ids, directory / USER_VECTORS_FILE)
    _write_vectors(dataset.item_vectors, graph.item_ids, directory / ITEM_VECTORS_FILE)
    return directory


def _write_vectors(vectors: np.ndarray, ids, path: Path):
    frame = pd.DataFrame(vectors, columns=[f"v{c + 1}" for c in range(vectors.shape[1])])
    frame.insert(0, "id", list(ids))
    frame.to_csv(path, index=False)


def load_ground_truth_scores(directory: Union[str, Path], graph: InteractionGraph) -> np.ndarray:
    """
    Rebuilds the full ground-truth score matrix for the nodes of graph (which may be a
    filtered subgraph of the dump) from the persisted latent vectors.
    """
    directory = Path(directory)
    try:
        users = pd.read_csv(directory / USER_VECTORS_FILE, dtype={"id": str}, float_precision="round_trip")
        items = pd.read_csv(directory / ITEM_VECTORS_FILE, dtype={"id": str}, float_precision="round_trip")
    except FileNotFoundError as e:
        raise DataError(f"{directory} holds no synthetic ground truth: {e}")
    users = users.set_index("id").loc[list(graph.user_ids)].to_numpy(dtype=np.float64)
    items = items.set_index("id").loc[list(graph.item_ids)].to_numpy(dtype=np.float64)
    return users @ items.T


def synthesize(cfg: SynthConfig, seed: int, directory: Union[str, Path]) -> SyntheticDataset:
    dataset = generate(cfg, seed)
    dump_synthetic(dataset, directory, cfg, seed)
    logger.info(f"Synthetic dataset written to {directory}, process memory {misc.process_memory_mb():.1f} MiB")
    return dataset
