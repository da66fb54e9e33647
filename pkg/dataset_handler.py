import re
import logging
from pathlib import Path
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import sparse

from helpers import misc
from helpers.errors import ConfigError, DataError, EmptyDatasetError, IngestionError
from model.numeric import RngStream

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
Adjacency = Tuple[Tuple[int, ...], ...]

INTERACTIONS_FILE = "interactions.csv"
USER_FEATURES_FILE = "user_features.csv"
ITEM_FEATURES_FILE = "item_features.csv"
USER_NEIGHBORS_FILE = "user_neighbors.csv"
ITEM_NEIGHBORS_FILE = "item_neighbors.csv"
MANIFEST_FILE = "manifest.json"

_PANDAS_LINE = re.compile(r"line (\d+)")


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array)
    array.setflags(write=False)
    return array


def _feature_rows(features, n_rows: int) -> np.ndarray:
    array = np.asarray(features, dtype=np.float64)
    if array.ndim != 2:
        # numpy refuses reshape(n, -1) on an empty array
        array = array.reshape(n_rows, -1) if array.size else np.zeros((n_rows, 0))
    if array.shape[0] != n_rows:
        raise DataError(f"Expected {n_rows} feature rows, got {array.shape[0]}")
    return array


@dataclass(frozen=True)
class InteractionGraph:
    """
    Users, items, their features, positive interactions and causal adjacency.

    Nodes share one index space: users are 0..n_users-1 and item i is node n_users + i.
    Adjacency lists hold node ids in that space, so a user may list users and items.
    """
    n_users: int
    n_items: int
    user_features: np.ndarray
    item_features: np.ndarray
    interactions: np.ndarray
    user_causal_adj: Adjacency
    item_causal_adj: Adjacency
    user_ids: Tuple[str, ...] = ()
    item_ids: Tuple[str, ...] = ()

    def __post_init__(self):
        pairs = np.asarray(self.interactions, dtype=np.int64).reshape(-1, 2)
        if len(pairs):
            pairs = np.unique(pairs, axis=0)
        object.__setattr__(self, "interactions", _readonly(pairs))
        object.__setattr__(self, "user_features", _readonly(_feature_rows(self.user_features, self.n_users)))
        object.__setattr__(self, "item_features", _readonly(_feature_rows(self.item_features, self.n_items)))
        if not self.user_ids:
            object.__setattr__(self, "user_ids", tuple(str(u) for u in range(self.n_users)))
        if not self.item_ids:
            object.__setattr__(self, "item_ids", tuple(str(i) for i in range(self.n_items)))
        object.__setattr__(self, "user_causal_adj", tuple(tuple(int(n) for n in row) for row in self.user_causal_adj))
        object.__setattr__(self, "item_causal_adj", tuple(tuple(int(n) for n in row) for row in self.item_causal_adj))
        self._check()

    def _check(self):
        if len(self.user_ids) != self.n_users or len(self.item_ids) != self.n_items:
            raise DataError("Id side tables do not match node counts")
        if len(self.user_causal_adj) != self.n_users or len(self.item_causal_adj) != self.n_items:
            raise DataError("Causal adjacency must hold one list per node")
        pairs = self.interactions
        if len(pairs) and (pairs.min() < 0 or pairs[:, 0].max() >= self.n_users or pairs[:, 1].max() >= self.n_items):
            raise DataError("Interaction references an unknown user or item")
        for node, row in enumerate(self.user_causal_adj + self.item_causal_adj):
            if len(set(row)) != len(row):
                raise DataError(f"Adjacency of node {node} contains duplicates")
            if node in row:
                raise DataError(f"Adjacency of node {node} contains a self-loop")
            if row and (min(row) < 0 or max(row) >= self.n_nodes):
                raise DataError(f"Adjacency of node {node} references an unknown node")
        if not (np.all(np.isfinite(self.user_features)) and np.all(np.isfinite(self.item_features))):
            raise DataError("Feature rows must be finite")

    @property
    def n_nodes(self) -> int:
        return self.n_users + self.n_items

    @property
    def is_empty(self) -> bool:
        return self.n_users == 0 or self.n_items == 0 or len(self.interactions) == 0

    def item_node(self, item: int) -> int:
        return self.n_users + item

    def pairs(self) -> frozenset:
        return frozenset((int(u), int(i)) for u, i in self.interactions)

    def user_items(self) -> List[np.ndarray]:
        return _group(self.interactions, self.n_users, column=0)

    def item_users(self) -> List[np.ndarray]:
        return _group(self.interactions[:, ::-1], self.n_items, column=0)

    def degrees(self) -> Tuple[np.ndarray, np.ndarray]:
        users = np.bincount(self.interactions[:, 0], minlength=self.n_users)
        items = np.bincount(self.interactions[:, 1], minlength=self.n_items)
        return users, items

    def interaction_matrix(self) -> sparse.csr_matrix:
        data = np.ones(len(self.interactions))
        return sparse.csr_matrix((data, (self.interactions[:, 0], self.interactions[:, 1])),
                                 shape=(self.n_users, self.n_items))

    def with_interactions(self, interactions: np.ndarray) -> "InteractionGraph":
        return InteractionGraph(self.n_users, self.n_items, self.user_features, self.item_features,
                                interactions, self.user_causal_adj, self.item_causal_adj,
                                self.user_ids, self.item_ids)

    def with_adjacency(self, user_adj: Sequence[Sequence[int]], item_adj: Sequence[Sequence[int]]) -> "InteractionGraph":
        return InteractionGraph(self.n_users, self.n_items, self.user_features, self.item_features,
                                self.interactions, tuple(map(tuple, user_adj)), tuple(map(tuple, item_adj)),
                                self.user_ids, self.item_ids)

    def statistics(self) -> Dict[str, float]:
        return {"users": self.n_users, "items": self.n_items,
                "interactions": int(len(self.interactions)), "density": density(self)}


def _group(pairs: np.ndarray, n_groups: int, column: int) -> List[np.ndarray]:
    groups = [[] for _ in range(n_groups)]
    for row in pairs:
        groups[int(row[column])].append(int(row[1 - column]))
    return [np.array(sorted(group), dtype=np.int64) for group in groups]


@dataclass(frozen=True)
class SplitDataset:
    graph: InteractionGraph
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    ratios: Tuple[float, float, float] = (0.7, 0.1, 0.2)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def part(self, name: str) -> np.ndarray:
        if name not in ("train", "validation", "test"):
            raise ConfigError(f"Unknown split '{name}', expected train, validation or test")
        return getattr(self, name)

    def user_items(self, name: str) -> List[np.ndarray]:
        if name not in self._cache:
            self._cache[name] = _group(self.part(name), self.graph.n_users, column=0)
        return self._cache[name]

    def train_graph(self) -> InteractionGraph:
        return self.graph.with_interactions(self.train)


# Ingestion ##########################################################################

def _id_sort_key(raw: str):
    """Integer-looking ids sort numerically, everything else lexicographically after them."""
    try:
        return 0, int(raw), ""
    except ValueError:
        return 1, 0, raw


def _read_csv(path: PathLike, what: str) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True,
                           encoding="utf-8")
    except FileNotFoundError:
        raise IngestionError(f"{what} file not found: {path}")
    except pd.errors.EmptyDataError:
        raise IngestionError(f"{what} file is empty: {path}")
    except pd.errors.ParserError as e:
        match = _PANDAS_LINE.search(str(e))
        raise IngestionError(f"{what} file {path} is malformed: {e}",
                             line=int(match.group(1)) if match else None)


def _missing_cells(frame: pd.DataFrame) -> pd.Series:
    return frame.isna().any(axis=1) | (frame == "").any(axis=1)


def ingest(interaction_file: PathLike,
           user_feature_file: Optional[PathLike] = None,
           item_feature_file: Optional[PathLike] = None,
           rating_threshold: float = 3.0,
           user_neighbor_file: Optional[PathLike] = None,
           item_neighbor_file: Optional[PathLike] = None,
           keep_isolated: bool = False) -> InteractionGraph:
    """
    Builds an InteractionGraph from raw CSV files.

    :param interaction_file: CSV with header user_id,item_id,rating[,timestamp]
    :param user_feature_file: optional CSV id,f1,f2,... for users
    :param item_feature_file: optional CSV id,f1,f2,... for items
    :param rating_threshold: only ratings strictly above it become positive interactions
    :param user_neighbor_file: optional CSV id,neighbor_id[,neighbor_type] for users
    :param item_neighbor_file: optional CSV id,neighbor_id[,neighbor_type] for items
    :param keep_isolated: every id of the feature files becomes a node, even without a positive interaction
    :return: graph with dense 0-based ids, original ids kept in user_ids / item_ids
    :raise IngestionError: malformed rows (with line number) or unknown feature ids
    :raise EmptyDatasetError: if no rating passes the threshold
    """
    frame = _read_csv(interaction_file, "Interaction")
    expected = ["user_id", "item_id", "rating"]
    columns = list(frame.columns)
    if columns[:3] != expected or len(columns) > 4:
        raise IngestionError(f"Interaction header must be user_id,item_id,rating[,timestamp], got {','.join(columns)}",
                             line=1)
    frame = frame[expected]
    missing = _missing_cells(frame)
    if missing.any():
        row = int(np.flatnonzero(missing.to_numpy())[0])
        raise IngestionError("expected 3 columns user_id,item_id,rating", line=row + 2)
    ratings = pd.to_numeric(frame["rating"], errors="coerce")
    if ratings.isna().any():
        row = int(np.flatnonzero(ratings.isna().to_numpy())[0])
        raise IngestionError(f"rating '{frame['rating'].iloc[row]}' is not a number", line=row + 2)

    user_frame = _read_feature_frame(user_feature_file, "User feature")
    item_frame = _read_feature_frame(item_feature_file, "Item feature")
    known_users = set(frame["user_id"])
    known_items = set(frame["item_id"])
    positive = frame[ratings.to_numpy() > rating_threshold]
    if positive.empty:
        raise EmptyDatasetError(f"No interaction in {interaction_file} is rated above {rating_threshold}")

    user_nodes, item_nodes = set(positive["user_id"]), set(positive["item_id"])
    if keep_isolated:
        for nodes, known, features in ((user_nodes, known_users, user_frame), (item_nodes, known_items, item_frame)):
            if features is not None:
                nodes.update(features["id"])
                known.update(features["id"])
    user_ids = tuple(sorted(user_nodes, key=_id_sort_key))
    item_ids = tuple(sorted(item_nodes, key=_id_sort_key))
    user_index = {raw: i for i, raw in enumerate(user_ids)}
    item_index = {raw: i for i, raw in enumerate(item_ids)}
    pairs = np.array([(user_index[u], item_index[i]) for u, i in zip(positive["user_id"], positive["item_id"])],
                     dtype=np.int64)
    logger.info(f"Ingested {len(frame)} rows from {interaction_file}, {len(positive)} rated above "
                f"{rating_threshold} ({len(user_ids)} users, {len(item_ids)} items)")

    user_features = _feature_matrix(user_frame, known_users, user_index, "User feature")
    item_features = _feature_matrix(item_frame, known_items, item_index, "Item feature")

    n_users = len(user_ids)
    user_adj = [[] for _ in range(n_users)]
    item_adj = [[] for _ in range(len(item_ids))]
    indices = {"user": (user_index, 0), "item": (item_index, n_users)}
    _read_neighbors(user_neighbor_file, "user", user_index, indices, user_adj, self_offset=0)
    _read_neighbors(item_neighbor_file, "item", item_index, indices, item_adj, self_offset=n_users)

    return InteractionGraph(n_users, len(item_ids), user_features, item_features, pairs,
                            tuple(map(tuple, user_adj)), tuple(map(tuple, item_adj)), user_ids, item_ids)


def _read_feature_frame(path: Optional[PathLike], what: str) -> Optional[pd.DataFrame]:
    if path is None:
        return None
    frame = _read_csv(path, what)
    if frame.columns[0] != "id":
        raise IngestionError(f"{what} header must start with 'id'", line=1)
    missing = _missing_cells(frame)
    if missing.any():
        row = int(np.flatnonzero(missing.to_numpy())[0])
        raise IngestionError(f"expected {len(frame.columns)} columns", line=row + 2)
    return frame


def _feature_matrix(frame: Optional[pd.DataFrame], known_ids: set, index: Dict[str, int], what: str) -> np.ndarray:
    """
    Missing nodes get zero features; rows of nodes dropped by the threshold are skipped.
    """
    if frame is None:
        return np.zeros((len(index), 0))
    features = np.zeros((len(index), len(frame.columns) - 1))
    for row, record in enumerate(frame.itertuples(index=False)):
        raw_id = record[0]
        if raw_id not in known_ids:
            raise IngestionError(f"{what} file references unknown id '{raw_id}'", line=row + 2)
        try:
            values = np.array([float(v) for v in record[1:]])
        except ValueError:
            raise IngestionError(f"{what} values must be numeric", line=row + 2)
        if not np.all(np.isfinite(values)):
            raise IngestionError(f"{what} values must be finite", line=row + 2)
        if raw_id in index:
            features[index[raw_id]] = values
    return features


def _read_neighbors(path: Optional[PathLike], kind: str, own_index: Dict[str, int],
                    indices: Dict[str, Tuple[Dict[str, int], int]], adjacency: List[List[int]], self_offset: int):
    if path is None:
        return
    frame = _read_csv(path, f"{kind.capitalize()} neighbor")
    if list(frame.columns[:2]) != ["id", "neighbor_id"]:
        raise IngestionError("Neighbor header must be id,neighbor_id[,neighbor_type]", line=1)
    has_type = "neighbor_type" in frame.columns
    skipped = 0
    for row, record in enumerate(frame.itertuples(index=False)):
        neighbor_kind = getattr(record, "neighbor_type") if has_type else kind
        if neighbor_kind not in indices:
            raise IngestionError(f"neighbor_type must be 'user' or 'item', got '{neighbor_kind}'", line=row + 2)
        neighbor_index, offset = indices[neighbor_kind]
        if record.id not in own_index or record.neighbor_id not in neighbor_index:
            skipped += 1
            continue
        node = self_offset + own_index[record.id]
        neighbor = offset + neighbor_index[record.neighbor_id]
        targets = adjacency[own_index[record.id]]
        if neighbor != node and neighbor not in targets:
            targets.append(neighbor)
    if skipped:
        logger.info(f"Skipped {skipped} {kind} neighbor edges touching nodes without positive interactions")


# Preprocessing ######################################################################

def derive_co_interaction_neighbors(graph: InteractionGraph, max_neighbors: Optional[int] = 50) -> InteractionGraph:
    """
    Fills causal adjacency from co-interactions: users sharing an item are neighbors,
    items sharing a user are neighbors, and every user/item also lists the nodes it
    interacted with. Same-type neighbors are capped at max_neighbors, highest co-count
    first, ties by ascending id. Interacted nodes are capped at max_neighbors too, best
    connected first, ties by ascending id. Existing adjacency entries are kept in front.
    """
    matrix = graph.interaction_matrix()
    co_users = (matrix @ matrix.T).tocsr()
    co_items = (matrix.T @ matrix).tocsr()
    user_items, item_users = graph.user_items(), graph.item_users()
    user_degree, item_degree = graph.degrees()

    user_adj = []
    for user in range(graph.n_users):
        derived = _ranked_co_neighbors(co_users, user, max_neighbors)
        derived += [graph.item_node(item) for item in _ranked_by_degree(user_items[user], item_degree, max_neighbors)]
        user_adj.append(_merge(graph.user_causal_adj[user], derived))
    item_adj = []
    for item in range(graph.n_items):
        derived = [graph.item_node(other) for other in _ranked_co_neighbors(co_items, item, max_neighbors)]
        derived += _ranked_by_degree(item_users[item], user_degree, max_neighbors)
        item_adj.append(_merge(graph.item_causal_adj[item], derived))
    return graph.with_adjacency(user_adj, item_adj)


def _ranked_co_neighbors(co_counts: sparse.csr_matrix, node: int, cap: Optional[int]) -> List[int]:
    start, end = co_counts.indptr[node], co_counts.indptr[node + 1]
    ids, counts = co_counts.indices[start:end], co_counts.data[start:end]
    keep = (ids != node) & (counts > 0)
    ids, counts = ids[keep], counts[keep]
    order = np.lexsort((ids, -counts))
    ranked = [int(i) for i in ids[order]]
    return ranked if cap is None else ranked[:cap]


def _ranked_by_degree(nodes: np.ndarray, degree: np.ndarray, cap: Optional[int]) -> List[int]:
    order = np.lexsort((nodes, -degree[nodes])) if len(nodes) else np.array([], dtype=np.int64)
    ranked = [int(n) for n in nodes[order]]
    return ranked if cap is None else ranked[:cap]


def _merge(existing: Sequence[int], derived: Sequence[int]) -> Tuple[int, ...]:
    merged = list(existing)
    seen = set(merged)
    for node in derived:
        if node not in seen:
            seen.add(node)
            merged.append(node)
    return tuple(merged)


def k_core_filter(graph: InteractionGraph, k: int) -> InteractionGraph:
    """
    Repeatedly removes users and items with fewer than k interactions until every
    remaining node has at least k. The result may be empty; that is logged, not raised.
    """
    if k < 1:
        raise ConfigError(f"k_core must be >= 1, got {k}")
    pairs = graph.interactions
    while True:
        user_degree = np.bincount(pairs[:, 0], minlength=graph.n_users)
        item_degree = np.bincount(pairs[:, 1], minlength=graph.n_items)
        keep = (user_degree[pairs[:, 0]] >= k) & (item_degree[pairs[:, 1]] >= k)
        if keep.all():
            break
        pairs = pairs[keep]
    kept_users = np.flatnonzero(np.bincount(pairs[:, 0], minlength=graph.n_users) >= k) if len(pairs) else np.array([], int)
    kept_items = np.flatnonzero(np.bincount(pairs[:, 1], minlength=graph.n_items) >= k) if len(pairs) else np.array([], int)
    if len(kept_users) == graph.n_users and len(kept_items) == graph.n_items:
        return graph
    result = _subgraph(graph, kept_users, kept_items, pairs)
    if result.is_empty:
        logger.warning(f"{k}-core filter removed every node")
    else:
        logger.info(f"{k}-core filter kept {result.n_users}/{graph.n_users} users, "
                    f"{result.n_items}/{graph.n_items} items, {len(result.interactions)} interactions")
    return result


def _subgraph(graph: InteractionGraph, users: np.ndarray, items: np.ndarray, pairs: np.ndarray) -> InteractionGraph:
    user_map = {int(old): new for new, old in enumerate(users)}
    item_map = {int(old): new for new, old in enumerate(items)}
    n_users = len(users)
    node_map = dict(user_map)
    node_map.update({graph.item_node(old): n_users + new for old, new in item_map.items()})

    def remap(row):
        return tuple(node_map[n] for n in row if n in node_map)

    new_pairs = np.array([(user_map[int(u)], item_map[int(i)]) for u, i in pairs], dtype=np.int64).reshape(-1, 2)
    return InteractionGraph(
        n_users, len(items),
        graph.user_features[users] if n_users else np.zeros((0, graph.user_features.shape[1])),
        graph.item_features[items] if len(items) else np.zeros((0, graph.item_features.shape[1])),
        new_pairs,
        tuple(remap(graph.user_causal_adj[u]) for u in users),
        tuple(remap(graph.item_causal_adj[i]) for i in items),
        tuple(graph.user_ids[u] for u in users),
        tuple(graph.item_ids[i] for i in items))


def _split_counts(n: int, ratios: Sequence[float]) -> List[int]:
    """Largest-remainder apportionment of n interactions; train gets one if n >= 1."""
    quotas = [n * r for r in ratios]
    counts = [int(np.floor(q)) for q in quotas]
    remainders = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in remainders[:n - sum(counts)]:
        counts[i] += 1
    if n >= 1 and counts[0] == 0:
        donor = max(range(1, len(counts)), key=lambda i: counts[i])
        counts[donor] -= 1
        counts[0] += 1
    return counts


def split(graph: InteractionGraph, ratios: Sequence[float] = (0.7, 0.1, 0.2),
          rng: Optional[RngStream] = None) -> SplitDataset:
    """
    Per-user stratified random split into train/validation/test.
    :raise ConfigError: if the ratios do not sum to 1 within 1e-9
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"Split ratios must be three non-negative values summing to 1, got {ratios}")
    rng = rng if rng is not None else RngStream("split", 0)
    parts = ([], [], [])
    for user, items in enumerate(graph.user_items()):
        if not len(items):
            continue
        shuffled = rng.permutation(items)
        start = 0
        for part, count in zip(parts, _split_counts(len(items), ratios)):
            part.extend((user, int(item)) for item in shuffled[start:start + count])
            start += count
    arrays = [np.array(sorted(p), dtype=np.int64).reshape(-1, 2) for p in parts]
    logger.info(f"Split {len(graph.interactions)} interactions into "
                f"{len(arrays[0])}/{len(arrays[1])}/{len(arrays[2])}")
    return SplitDataset(graph, arrays[0], arrays[1], arrays[2], ratios)


def density(graph: InteractionGraph) -> float:
    if graph.n_users == 0 or graph.n_items == 0:
        return 0.0
    return len(graph.interactions) / (graph.n_users * graph.n_items)


# Canonical dump #####################################################################

def dump_graph(graph: InteractionGraph, directory: PathLike, manifest: Optional[dict] = None) -> Path:
    """
    Writes the canonical dump: the ingestion CSVs plus manifest.json.
    Interactions are written with rating 1, so load_graph re-ingests with threshold 0.
    """
    directory = Path(directory)
    misc.check_create_directory(directory)
    pd.DataFrame({"user_id": [graph.user_ids[u] for u in graph.interactions[:, 0]],
                  "item_id": [graph.item_ids[i] for i in graph.interactions[:, 1]],
                  "rating": 1}).to_csv(directory / INTERACTIONS_FILE, index=False)
    _write_features(graph.user_features, graph.user_ids, directory / USER_FEATURES_FILE)
    _write_features(graph.item_features, graph.item_ids, directory / ITEM_FEATURES_FILE)
    _write_neighbors(graph, graph.user_causal_adj, graph.user_ids, directory / USER_NEIGHBORS_FILE)
    _write_neighbors(graph, graph.item_causal_adj, graph.item_ids, directory / ITEM_NEIGHBORS_FILE)

    content = {"counts": graph.statistics()}
    content.update(manifest or {})
    misc.write_json(directory / MANIFEST_FILE, content)
    logger.info(f"Dataset dump written to {directory}")
    return directory


def _write_features(features: np.ndarray, ids: Sequence[str], path: Path):
    frame = pd.DataFrame(features, columns=[f"f{c + 1}" for c in range(features.shape[1])])
    frame.insert(0, "id", list(ids))
    frame.to_csv(path, index=False)


def _write_neighbors(graph: InteractionGraph, adjacency: Adjacency, ids: Sequence[str], path: Path):
    rows = []
    for node, neighbors in enumerate(adjacency):
        for neighbor in neighbors:
            if neighbor < graph.n_users:
                rows.append((ids[node], graph.user_ids[neighbor], "user"))
            else:
                rows.append((ids[node], graph.item_ids[neighbor - graph.n_users], "item"))
    pd.DataFrame(rows, columns=["id", "neighbor_id", "neighbor_type"]).to_csv(path, index=False)


def load_graph(directory: PathLike) -> Tuple[InteractionGraph, dict]:
    """
    Reads a canonical dump back. Nodes listed in the feature files survive without interactions.
    :return: (graph, manifest dict)
    """
    directory = Path(directory)
    if not (directory / INTERACTIONS_FILE).is_file():
        raise IngestionError(f"{directory} is not a dataset dump (missing {INTERACTIONS_FILE})")

    def optional(name):
        path = directory / name
        return path if path.is_file() else None

    graph = ingest(directory / INTERACTIONS_FILE, optional(USER_FEATURES_FILE), optional(ITEM_FEATURES_FILE),
                   0.0, optional(USER_NEIGHBORS_FILE), optional(ITEM_NEIGHBORS_FILE), keep_isolated=True)
    manifest = misc.read_json(directory / MANIFEST_FILE) if optional(MANIFEST_FILE) else {}
    return graph, manifest


def prepare_splits(directory: PathLike, k_core: int, ratios: Sequence[float], seed: int) -> Tuple[SplitDataset, dict]:
    """
    Loads a canonical dump, applies the k-core filter and splits it with the "split"
    stream of seed. Synthetic dumps skip the filter so every generated node keeps its
    causal neighbors. The returned reference is enough to rebuild the same splits later.
    :return: (splits, dataset reference dict)
    :raise EmptyDatasetError: if nothing survives the k-core filter
    """
    graph, manifest = load_graph(directory)
    source = manifest.get("source", "ingest")
    if source == "synthetic":
        logger.info(f"Synthetic dump {directory}: keeping all {graph.n_users} users and {graph.n_items} items")
    else:
        graph = k_core_filter(graph, k_core)
    if graph.is_empty:
        raise EmptyDatasetError(f"No interactions left in {directory} after the {k_core}-core filter")
    splits = split(graph, ratios, RngStream("split", seed))
    reference = {"path": str(directory), "k_core": k_core, "split_ratios": list(splits.ratios), "seed": seed,
                 "source": source}
    return splits, reference


def splits_from_reference(reference: dict, directory: Optional[PathLike] = None) -> SplitDataset:
    """Rebuilds the splits a checkpoint was trained on; directory overrides the stored path."""
    try:
        path = directory if directory is not None else reference["path"]
        splits, _ = prepare_splits(path, reference["k_core"], reference["split_ratios"], reference["seed"])
    except KeyError as e:
        raise DataError(f"Checkpoint holds no usable dataset reference (missing {e})")
    return splits
