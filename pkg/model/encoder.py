"""
Causal graph encoder.

Every node (users first, then items) carries a hidden factor row. One layer computes a
causality-aware message for every node from its causal neighbors and aggregates it with
the node's previous hidden factor and its exogenous draw. Layer outputs are summed and
fed to Gaussian heads, one pair per node type.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from dataset_handler import InteractionGraph
from helpers.errors import DimensionError, EncoderConsistencyError, InvalidInputError, NumericOverflowError
from model.numeric import (ModelParams, RngStream, RngStreams, Tensor, clip, concat, dropout, exp, gaussian_sample,
                           glorot_uniform, matmul, node_dropout, relu, segment_sum, take_rows)

logger = logging.getLogger(__name__)

TRAIN = "train"
EVAL = "eval"
NODE_OFFSET_SCALE = 0.1
SIGMA_INIT_SCALE = 0.01
LOG_VARIANCE_LIMIT = 10.0


@dataclass(frozen=True)
class EncoderConfig:
    h_dim: int = 32
    latent_dim: int = 64
    n_layers: int = 2
    z_dim: int = 4
    encoder: str = "causal"
    causal_messages: bool = True
    variance: str = "exp_relu"
    dropout: float = 0.4
    dropout_mode: str = "feature"
    message_norm: str = "mean"
    node_embeddings: bool = False

    @classmethod
    def from_train(cls, train) -> "EncoderConfig":
        return cls(h_dim=train.h_dim, latent_dim=train.latent_dim, n_layers=train.n_layers, z_dim=train.z_dim,
                   encoder=train.encoder, causal_messages=train.causal_messages, variance=train.variance,
                   dropout=train.dropout, dropout_mode=train.dropout_mode, message_norm=train.message_norm,
                   node_embeddings=train.node_embeddings)


def _standardize(features: np.ndarray) -> np.ndarray:
    if features.shape[0] == 0 or features.shape[1] == 0:
        return features.copy()
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std[std == 0] = 1.0
    return (features - mean) / std


@dataclass(frozen=True)
class EncoderGraph:
    """
    Edge-list view of a causal adjacency. Edge e carries a message from sources[e]
    into targets[e]; edges are ordered by target, then by adjacency position.
    """
    n_users: int
    n_items: int
    user_features: np.ndarray
    item_features: np.ndarray
    targets: np.ndarray
    sources: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.n_users + self.n_items

    @property
    def degree(self) -> np.ndarray:
        return np.bincount(self.targets, minlength=self.n_nodes)

    @classmethod
    def from_graph(cls, graph: InteractionGraph, adjacency: Optional[Sequence[Sequence[int]]] = None) -> "EncoderGraph":
        """
        :param graph: supplies node counts and features
        :param adjacency: one neighbor list per node in unified ids, default the graph's causal adjacency
        :raise EncoderConsistencyError: on a neighbor id outside the node range
        """
        if adjacency is None:
            adjacency = graph.user_causal_adj + graph.item_causal_adj
        n_nodes = graph.n_nodes
        if len(adjacency) != n_nodes:
            raise EncoderConsistencyError(f"Adjacency has {len(adjacency)} lists for {n_nodes} nodes")
        targets, sources = [], []
        for node, neighbors in enumerate(adjacency):
            for neighbor in neighbors:
                if not 0 <= neighbor < n_nodes:
                    raise EncoderConsistencyError(f"Node {node} lists unknown neighbor {neighbor}")
                targets.append(node)
                sources.append(int(neighbor))
        return cls(graph.n_users, graph.n_items,
                   _standardize(graph.user_features), _standardize(graph.item_features),
                   np.array(targets, dtype=np.int64), np.array(sources, dtype=np.int64))


@dataclass
class LatentState:
    mode: str
    exogenous: np.ndarray
    layer_outputs: List[Tensor]
    hidden: Tensor
    user_mu: Tensor
    user_sigma_sq: Tensor
    item_mu: Tensor
    item_sigma_sq: Tensor
    user_samples: List[Tensor] = field(default_factory=list)
    item_samples: List[Tensor] = field(default_factory=list)

    @property
    def users(self) -> Tensor:
        return self.user_samples[0] if self.user_samples else self.user_mu

    @property
    def items(self) -> Tensor:
        return self.item_samples[0] if self.item_samples else self.item_mu


# Parameters #########################################################################

def init_encoder_params(cfg: EncoderConfig, graph: EncoderGraph, rng: RngStream) -> Dict[str, np.ndarray]:
    """
    Glorot-uniform weights, zero biases. Every weight is drawn regardless of the ablation
    flags, so switching a flag never shifts the initialization stream. The variance heads
    start near zero, which puts every posterior variance close to 1.
    """
    h, d, z = cfg.h_dim, cfg.latent_dim, cfg.z_dim
    params = {
        "user_input": glorot_uniform((graph.user_features.shape[1], h), rng),
        "item_input": glorot_uniform((graph.item_features.shape[1], h), rng),
    }
    offsets = rng.normal((graph.n_nodes, h), scale=NODE_OFFSET_SCALE)
    if cfg.node_embeddings:
        params["node_offset"] = offsets
    for layer in range(1, cfg.n_layers + 1):
        message = glorot_uniform((2 * h, h), rng)
        aggregate_weight = glorot_uniform((2 * h + z, h), rng)
        gcn = glorot_uniform((h, h), rng)
        if cfg.encoder == "gcn":
            params[f"gcn_{layer}"] = gcn
        else:
            params[f"message_{layer}"] = message
            params[f"aggregate_{layer}"] = aggregate_weight
    for kind in ("user", "item"):
        for head in ("mu", "sigma"):
            weight = glorot_uniform((h, d), rng)
            params[f"{kind}_{head}_weight"] = weight * SIGMA_INIT_SCALE if head == "sigma" else weight
            params[f"{kind}_{head}_bias"] = np.zeros(d)
    return params


# Layers #############################################################################

def causal_message(hidden: Tensor, graph: EncoderGraph, weight: Tensor, normalize: bool = False) -> Tensor:
    """
    m[i] = sum over neighbors j of h[j] * relu(W . concat(h[i], h[j])), for every node i at once.
    Nodes without neighbors get the zero vector.
    :param normalize: divide each node's message by its neighbor count
    """
    if len(graph.targets) == 0:
        return Tensor(np.zeros(hidden.shape))
    target_rows = take_rows(hidden, graph.targets)
    source_rows = take_rows(hidden, graph.sources)
    gate = relu(matmul(concat([target_rows, source_rows], axis=1), weight))
    message = segment_sum(source_rows * gate, graph.targets, hidden.shape[0])
    if normalize:
        message = message / Tensor(np.maximum(graph.degree, 1).reshape(-1, 1).astype(np.float64))
    return message


def aggregate(hidden: Tensor, message: Tensor, exogenous: np.ndarray, weight: Tensor) -> Tensor:
    """h' = relu(W . concat(h, m, Z)) row-wise."""
    if not (hidden.shape[0] == message.shape[0] == exogenous.shape[0]):
        raise DimensionError.for_shapes("aggregate", hidden.shape, message.shape, exogenous.shape)
    return relu(matmul(concat([hidden, message, Tensor(exogenous)], axis=1), weight))


def layer_aggregate(layer_outputs: Sequence[Tensor]) -> Tensor:
    total = layer_outputs[0]
    for output in layer_outputs[1:]:
        total = total + output
    return total


def gcn_message_variant(hidden: Tensor, graph: EncoderGraph, weight: Tensor) -> Tensor:
    """Plain GCN layer: relu(W . mean of h over the node and its neighbors)."""
    total = hidden
    if len(graph.targets):
        total = hidden + segment_sum(take_rows(hidden, graph.sources), graph.targets, hidden.shape[0])
    counts = (graph.degree + 1.0).reshape(-1, 1)
    return relu(matmul(total / Tensor(counts), weight))


def _drop(x: Tensor, cfg: EncoderConfig, training: bool, rng: Optional[RngStream]) -> Tensor:
    if cfg.dropout_mode == "node":
        return node_dropout(x, cfg.dropout, training, rng)
    return dropout(x, cfg.dropout, training, rng)


def _head(hidden: Tensor, params: ModelParams, kind: str, variance: str):
    mu = relu(matmul(hidden, params[f"{kind}_mu_weight"]) + params[f"{kind}_mu_bias"])
    log_variance = matmul(hidden, params[f"{kind}_sigma_weight"]) + params[f"{kind}_sigma_bias"]
    if variance == "exp_relu":
        log_variance = relu(log_variance)
    return mu, clip(log_variance, -LOG_VARIANCE_LIMIT, LOG_VARIANCE_LIMIT)


def encode(graph: EncoderGraph, params: ModelParams, cfg: EncoderConfig, mode: str = EVAL,
           streams: Optional[RngStreams] = None, exogenous: Optional[np.ndarray] = None,
           n_samples: int = 1) -> LatentState:
    """
    Full-graph forward pass.

    :param graph: edge list and standardized features
    :param params: encoder parameters
    :param cfg: encoder configuration
    :param mode: "train" samples representations and applies dropout, "eval" returns the means
    :param streams: required in train mode, uses the "dropout" and "sampling" streams
    :param exogenous: Z per node (n_nodes x z_dim), zeros when omitted
    :param n_samples: reparameterized draws kept per node in train mode
    :raise NumericOverflowError: naming the layer that produced a non-finite value
    """
    training = mode == TRAIN
    if training and streams is None:
        raise InvalidInputError("encode in train mode needs random streams")
    if exogenous is None or not training:
        exogenous = np.zeros((graph.n_nodes, cfg.z_dim))
    dropout_rng = streams["dropout"] if training else None

    user_rows = matmul(Tensor(graph.user_features), params["user_input"])
    item_rows = matmul(Tensor(graph.item_features), params["item_input"])
    hidden = concat([user_rows, item_rows], axis=0)
    if cfg.node_embeddings:
        hidden = hidden + params["node_offset"]

    outputs = []
    for layer in range(1, cfg.n_layers + 1):
        try:
            if cfg.encoder == "gcn":
                hidden = gcn_message_variant(hidden, graph, params[f"gcn_{layer}"])
            else:
                if cfg.causal_messages:
                    message = causal_message(hidden, graph, params[f"message_{layer}"], cfg.message_norm == "mean")
                else:
                    message = Tensor(np.zeros(hidden.shape))
                hidden = aggregate(hidden, message, exogenous, params[f"aggregate_{layer}"])
        except NumericOverflowError as e:
            raise NumericOverflowError(e.message, layer=layer)
        hidden = _drop(hidden, cfg, training, dropout_rng)
        outputs.append(hidden)

    aggregated = layer_aggregate(outputs)
    users = take_rows(aggregated, np.arange(graph.n_users))
    items = take_rows(aggregated, np.arange(graph.n_users, graph.n_nodes))
    try:
        user_mu, user_log_variance = _head(users, params, "user", cfg.variance)
        item_mu, item_log_variance = _head(items, params, "item", cfg.variance)
        user_sigma_sq, item_sigma_sq = exp(user_log_variance), exp(item_log_variance)
    except NumericOverflowError as e:
        raise NumericOverflowError(e.message, layer=cfg.n_layers + 1)

    state = LatentState(mode, exogenous, outputs, aggregated, user_mu, user_sigma_sq, item_mu, item_sigma_sq)
    if training:
        sampler = streams["sampling"]
        user_sigma, item_sigma = exp(0.5 * user_log_variance), exp(0.5 * item_log_variance)
        for _ in range(n_samples):
            state.user_samples.append(gaussian_sample(user_mu, user_sigma, sampler.normal(user_mu.shape)))
            state.item_samples.append(gaussian_sample(item_mu, item_sigma, sampler.normal(item_mu.shape)))
    return state


def draw_exogenous(graph: EncoderGraph, cfg: EncoderConfig, rng: RngStream) -> np.ndarray:
    """Fresh Z ~ N(0, I) for every node, drawn once per training epoch."""
    return rng.normal((graph.n_nodes, cfg.z_dim))
