import logging
from typing import List, Tuple

import numpy as np

from config_handler import TrainConfig
from dataset_handler import SplitDataset
from model.cngcf import loss_term
from model.decoder import PROBABILITY_FLOOR, Representations
from model.numeric import ModelParams, RngStream, RngStreams, Tensor, clip, log, sigmoid, square_sum, take_rows
from model.objective import LossBreakdown

logger = logging.getLogger(__name__)

FACTOR_SCALE = 0.1


def sample_negatives(users: np.ndarray, train_items: List[np.ndarray], n_items: int, rng: RngStream) -> np.ndarray:
    """
    One uniform negative per positive pair, redrawn while it hits one of the user's
    training items. Users owning every item keep a positive draw.
    """
    negatives = rng.integers(0, n_items, len(users))
    positive_sets = [set(items.tolist()) for items in train_items]
    pending = np.array([i for i, (u, j) in enumerate(zip(users, negatives))
                        if j in positive_sets[u] and len(positive_sets[u]) < n_items], dtype=np.int64)
    while len(pending):
        negatives[pending] = rng.integers(0, n_items, len(pending))
        pending = np.array([i for i in pending if negatives[i] in positive_sets[users[i]]], dtype=np.int64)
    return negatives


class MFModel:
    """
    Matrix factorization trained with the pairwise ranking loss -log sigmoid(e_pos - e_neg)
    on one uniformly sampled negative per training pair, resampled every epoch.
    """
    name = "mf"

    def __init__(self, splits: SplitDataset, cfg: TrainConfig):
        self.splits = splits
        self.cfg = cfg
        self.n_users, self.n_items = splits.graph.n_users, splits.graph.n_items
        self.train_items = splits.user_items("train")
        self.pairs = splits.train
        self._negatives = np.zeros(len(self.pairs), dtype=np.int64)
        logger.info(f"MF baseline over {self.n_users} users, {self.n_items} items, {len(self.pairs)} training pairs")

    def init_params(self, streams: RngStreams) -> ModelParams:
        rng = streams["init"]
        return ModelParams({
            "user_factors": rng.normal((self.n_users, self.cfg.latent_dim), scale=FACTOR_SCALE),
            "item_factors": rng.normal((self.n_items, self.cfg.latent_dim), scale=FACTOR_SCALE),
        })

    def start_epoch(self, epoch: int, streams: RngStreams):
        self._negatives = sample_negatives(self.pairs[:, 0], self.train_items, self.n_items, streams["negatives"])

    def batches(self, streams: RngStreams) -> List[np.ndarray]:
        order = streams["batches"].permutation(len(self.pairs))
        size = self.cfg.batch_size
        return [order[start:start + size] for start in range(0, len(order), size)]

    def loss(self, params: ModelParams, batch: np.ndarray, streams: RngStreams,
             epoch: int = 0, batch_index: int = 0) -> Tuple[Tensor, LossBreakdown]:
        users, positives = self.pairs[batch, 0], self.pairs[batch, 1]
        negatives = self._negatives[batch]
        with loss_term("pairwise", epoch, batch_index):
            u = take_rows(params["user_factors"], users)
            v_pos = take_rows(params["item_factors"], positives)
            v_neg = take_rows(params["item_factors"], negatives)
            difference = (u * (v_pos - v_neg)).sum(axis=1)
            log_likelihood = log(clip(sigmoid(difference), PROBABILITY_FLOOR, 1.0)).mean()
            loss = -log_likelihood
            if self.cfg.l2_weight > 0:
                penalty = (square_sum(u) + square_sum(v_pos) + square_sum(v_neg)) / float(len(batch))
                loss = loss + self.cfg.l2_weight * penalty
        value = log_likelihood.item()
        return loss, LossBreakdown(reconstruction=value, kl=0.0, elbo_clean=value, elbo_cf=None,
                                   total=value, loss=loss.item(), lambda_=1.0)

    def representations(self, params: ModelParams) -> Representations:
        return Representations(params["user_factors"].numpy(), params["item_factors"].numpy())
