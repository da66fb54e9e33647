import logging
from contextlib import contextmanager
from typing import List, Optional, Tuple

import numpy as np

import dataset_handler
from config_handler import TrainConfig
from dataset_handler import SplitDataset
from helpers.errors import NonFiniteLossError, NumericOverflowError
from model import objective
from model.decoder import Representations
from model.encoder import TRAIN, EVAL, EncoderConfig, EncoderGraph, draw_exogenous, encode, init_encoder_params
from model.numeric import ModelParams, RngStreams, Tensor, square_sum

logger = logging.getLogger(__name__)


@contextmanager
def loss_term(name: str, epoch: int, batch: int):
    """Turns a non-finite kernel value into a diagnostic naming the loss term."""
    try:
        yield
    except NumericOverflowError as e:
        logger.error(f"Non-finite value in {name} at epoch {epoch}, batch {batch}: {e.message}")
        raise NonFiniteLossError(epoch, batch, name)


def l2_penalty(params: ModelParams, weight: float) -> Tensor:
    total = None
    for tensor in params.values():
        term = square_sum(tensor)
        total = term if total is None else total + term
    return weight * total


def user_batches(users: np.ndarray, batch_size: int, streams: RngStreams) -> List[np.ndarray]:
    order = streams["batches"].permutation(users)
    return [order[start:start + batch_size] for start in range(0, len(order), batch_size)]


def training_adjacency(splits: SplitDataset, neighbors: str, max_neighbors: int) -> Tuple[Tuple[int, ...], ...]:
    """
    Causal adjacency used for message passing. In causal+co_interaction mode it is unioned
    with co-interaction neighbors derived from the training interactions only.
    """
    graph = splits.train_graph()
    if neighbors == "causal+co_interaction":
        graph = dataset_handler.derive_co_interaction_neighbors(graph, max_neighbors)
    return graph.user_causal_adj + graph.item_causal_adj


class CNGCFModel:
    """
    Causal graph encoder + inner-product decoder trained on the augmented ELBO.

    Per batch the whole graph is encoded, the batch users' rows are reconstructed against
    their training items and the loss is -(augmented ELBO) + l2 * sum of squared weights.
    """
    name = "cngcf"

    def __init__(self, splits: SplitDataset, cfg: TrainConfig):
        self.splits = splits
        self.cfg = cfg
        self.encoder_cfg = EncoderConfig.from_train(cfg)
        self.graph = EncoderGraph.from_graph(splits.graph, training_adjacency(splits, cfg.neighbors, cfg.max_neighbors))
        self.train_items = splits.user_items("train")
        self.train_users = np.array([u for u, items in enumerate(self.train_items) if len(items)], dtype=np.int64)
        self.lambda_ = cfg.lambda_ if cfg.counterfactual else 1.0
        self.intervention = objective.InterventionSpec.from_train(cfg)
        self._exogenous: Optional[np.ndarray] = None
        logger.info(f"CNGCF model over {splits.graph.n_users} users, {splits.graph.n_items} items, "
                    f"{len(self.graph.targets)} message edges, {len(self.train_users)} training users")

    def init_params(self, streams: RngStreams) -> ModelParams:
        return ModelParams(init_encoder_params(self.encoder_cfg, self.graph, streams["init"]))

    def start_epoch(self, epoch: int, streams: RngStreams):
        self._exogenous = draw_exogenous(self.graph, self.encoder_cfg, streams["exogenous"])

    def batches(self, streams: RngStreams) -> List[np.ndarray]:
        return user_batches(self.train_users, self.cfg.batch_size, streams)

    def targets(self, users: np.ndarray) -> np.ndarray:
        rows = np.zeros((len(users), self.graph.n_items))
        for row, user in enumerate(users):
            rows[row, self.train_items[user]] = 1.0
        return rows

    def loss(self, params: ModelParams, users: np.ndarray, streams: RngStreams,
             epoch: int = 0, batch_index: int = 0) -> Tuple[Tensor, objective.LossBreakdown]:
        """
        :return: (scalar loss to minimize, breakdown of its terms)
        :raise NonFiniteLossError: naming the epoch, batch and offending term
        """
        cfg = self.cfg
        with loss_term("encoder", epoch, batch_index):
            state = encode(self.graph, params, self.encoder_cfg, TRAIN, streams, self._exogenous, cfg.n_samples)
        batch = objective.Batch(users, self.targets(users), len(self.train_users))
        with loss_term("elbo_clean", epoch, batch_index):
            clean = objective.elbo_clean(batch, state, cfg.likelihood)
        counterfactual = None
        if self.lambda_ < 1.0:
            with loss_term("elbo_cf", epoch, batch_index):
                cf_batch = objective.make_counterfactual(batch, self.intervention, streams["counterfactual"])
                counterfactual = objective.elbo_counterfactual(cf_batch, state, cfg.likelihood)
        with loss_term("total", epoch, batch_index):
            total = objective.loss_augmented(clean.elbo, counterfactual.elbo if counterfactual else None,
                                             self.lambda_)
            loss = -total
            if cfg.l2_weight > 0:
                loss = loss + l2_penalty(params, cfg.l2_weight)
        breakdown = objective.LossBreakdown(
            reconstruction=clean.reconstruction.item(), kl=clean.kl.item(), elbo_clean=clean.elbo.item(),
            elbo_cf=counterfactual.elbo.item() if counterfactual else None, total=total.item(),
            loss=loss.item(), lambda_=self.lambda_)
        return loss, breakdown

    def representations(self, params: ModelParams) -> Representations:
        state = encode(self.graph, params, self.encoder_cfg, EVAL)
        return Representations(state.user_mu.numpy(), state.item_mu.numpy())
