import math
import logging
from pathlib import Path
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from checkpoint_handler import Checkpoint
from dataset_handler import SplitDataset
from helpers import misc, table_handler
from helpers.errors import DimensionError, EmptyDatasetError, InvalidInputError
from model.decoder import Representations, rank_scores

logger = logging.getLogger(__name__)

METRICS = ("precision", "recall", "ndcg")
DEFAULT_KS = (10, 20)


def _check_ranking(ranked: Sequence[int], k: int):
    if k < 1:
        raise InvalidInputError(f"k must be >= 1, got {k}")
    if len(set(int(item) for item in ranked)) != len(ranked):
        raise InvalidInputError("Ranked list contains duplicate items")


def precision_recall_at_k(ranked: Sequence[int], relevant: Sequence[int], k: int) -> Optional[Tuple[float, float]]:
    """
    :return: (|top-k & relevant| / k, |top-k & relevant| / |relevant|), or None when
             relevant is empty (the user is skipped)
    :raise InvalidInputError: if ranked has duplicates or k < 1
    """
    _check_ranking(ranked, k)
    relevant = set(int(item) for item in relevant)
    if not relevant:
        return None
    hits = sum(1 for item in ranked[:k] if int(item) in relevant)
    return hits / k, hits / len(relevant)


def ndcg_at_k(ranked: Sequence[int], relevant: Sequence[int], k: int) -> Optional[float]:
    """
    Binary-relevance NDCG: DCG = sum of 1 / log2(rank + 1) over hits in the top k,
    normalized by the DCG of min(k, |relevant|) hits at the top.
    """
    _check_ranking(ranked, k)
    relevant = set(int(item) for item in relevant)
    if not relevant:
        return None
    dcg = sum(1.0 / math.log2(rank + 2) for rank, item in enumerate(ranked[:k]) if int(item) in relevant)
    idcg = sum(1.0 / math.log2(rank + 2) for rank in range(min(k, len(relevant))))
    return dcg / idcg if idcg > 0 else 0.0


@dataclass
class EvalReport:
    metrics: Dict[int, Dict[str, float]]
    per_user: List[dict]
    n_users: int
    n_skipped: int
    part: str = "test"
    config_hash: Optional[str] = None
    seed: Optional[int] = None
    dataset: dict = field(default_factory=dict)

    @property
    def ks(self) -> List[int]:
        return sorted(self.metrics)

    def metric(self, name: str, k: int) -> float:
        return self.metrics[k][name]

    def to_dict(self) -> dict:
        return {"metrics": {f"@{k}": values for k, values in sorted(self.metrics.items())},
                "per_user": self.per_user, "users_evaluated": self.n_users, "users_skipped": self.n_skipped,
                "part": self.part, "config_hash": self.config_hash, "seed": self.seed, "dataset": self.dataset}

    def table(self) -> str:
        rows = [[f"@{k}"] + [self.metrics[k][name] for name in METRICS] for k in self.ks]
        title = f"{self.part} split, {self.n_users} users ({self.n_skipped} skipped)"
        if self.config_hash:
            title += f", config {self.config_hash}, seed {self.seed}"
        return table_handler.render(["K"] + list(METRICS), rows, title)

    def save(self, directory: Union[str, Path]) -> Path:
        misc.check_create_directory(directory)
        path = Path(directory) / "report.json"
        misc.write_json(path, self.to_dict())
        with open(Path(directory) / "report.txt", "w", encoding="utf-8") as f:
            f.write(self.table() + "\n")
        return path


def evaluate_scores(scores: np.ndarray, splits: SplitDataset, ks: Sequence[int] = DEFAULT_KS,
                    part: str = "test") -> EvalReport:
    """
    Ranks the full catalog for every user with relevant items in part, minus the user's
    training items, and averages the metrics over those users in user order.
    """
    ks = sorted(set(int(k) for k in ks))
    if not ks or ks[0] < 1:
        raise InvalidInputError(f"Every K must be >= 1, got {ks}")
    graph = splits.graph
    if scores.shape != (graph.n_users, graph.n_items):
        raise DimensionError.for_shapes("evaluate_scores", scores.shape, (graph.n_users, graph.n_items))
    train_items = splits.user_items("train")
    relevant_items = splits.user_items(part)

    per_user, skipped = [], 0
    for user in range(graph.n_users):
        relevant = relevant_items[user]
        if not len(relevant):
            skipped += 1
            continue
        ranked = rank_scores(scores[user], exclude=train_items[user], k=ks[-1])
        for k in ks:
            precision, recall = precision_recall_at_k(ranked, relevant, k)
            per_user.append({"user": graph.user_ids[user], "k": k, "precision": precision, "recall": recall,
                             "ndcg": ndcg_at_k(ranked, relevant, k)})
    n_users = graph.n_users - skipped
    if n_users == 0:
        raise EmptyDatasetError(f"No user has {part} interactions to evaluate")

    metrics = {}
    for k in ks:
        rows = [row for row in per_user if row["k"] == k]
        metrics[k] = {name: float(np.mean([row[name] for row in rows])) for name in METRICS}
    logger.info(f"Evaluated {n_users} users on {part} ({skipped} skipped): " +
                ", ".join(f"P@{k}={metrics[k]['precision']:.4f}" for k in ks))
    return EvalReport(metrics, per_user, n_users, skipped, part)


def evaluate_representations(representations: Representations, splits: SplitDataset,
                             ks: Sequence[int] = DEFAULT_KS, part: str = "test") -> EvalReport:
    return evaluate_scores(representations.score_matrix(), splits, ks, part)


def evaluate(checkpoint: Checkpoint, splits: SplitDataset, ks: Sequence[int] = DEFAULT_KS,
             part: str = "test") -> EvalReport:
    report = evaluate_representations(checkpoint.representations(splits), splits, ks, part)
    report.config_hash = checkpoint.config_hash
    report.seed = checkpoint.seed
    report.dataset = checkpoint.dataset
    return report


def random_ranker_expectation(splits: SplitDataset, k: int, part: str = "test") -> Dict[str, float]:
    """
    Expected Precision@K / Recall@K of a uniformly random ranking of each user's candidate
    items (catalog minus training items): hits are hypergeometric with mean min(k, N) * R / N.
    """
    train_items = splits.user_items("train")
    precisions, recalls = [], []
    for user, relevant in enumerate(splits.user_items(part)):
        if not len(relevant):
            continue
        candidates = splits.graph.n_items - len(train_items[user])
        hits = min(k, candidates) * len(relevant) / candidates
        precisions.append(hits / k)
        recalls.append(hits / len(relevant))
    if not precisions:
        raise EmptyDatasetError(f"No user has {part} interactions to evaluate")
    return {"precision": float(np.mean(precisions)), "recall": float(np.mean(recalls))}
