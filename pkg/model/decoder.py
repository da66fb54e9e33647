import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from helpers.errors import DimensionError, InvalidInputError, UnknownNodeError
from model.numeric import ArrayLike, Tensor, as_tensor, clip, log, log_softmax, matmul, sigmoid, take_rows

logger = logging.getLogger(__name__)

PROBABILITY_FLOOR = 1e-12


@dataclass(frozen=True)
class Representations:
    """Plain arrays of user and item representations, the output of an eval-mode encode."""
    users: np.ndarray
    items: np.ndarray

    @property
    def n_users(self) -> int:
        return self.users.shape[0]

    @property
    def n_items(self) -> int:
        return self.items.shape[0]

    def score_matrix(self) -> np.ndarray:
        return self.users @ self.items.T


def score(u_repr: ArrayLike, v_repr: ArrayLike) -> Tensor:
    """
    Inner product preference score. Rows are scored pairwise when both inputs are matrices
    of the same shape, vectors give a scalar.
    :raise DimensionError: if the representation dims differ
    """
    u, v = as_tensor(u_repr), as_tensor(v_repr)
    if u.shape != v.shape:
        raise DimensionError.for_shapes("score", u.shape, v.shape)
    return (u * v).sum(axis=-1)


def score_rows(users: ArrayLike, items: ArrayLike) -> Tensor:
    """Scores of every (user row, item row) combination: users . items^T."""
    users, items = as_tensor(users), as_tensor(items)
    if users.shape[1] != items.shape[1]:
        raise DimensionError.for_shapes("score_rows", users.shape, items.shape)
    return matmul(users, items.T)


def _check_targets(y: np.ndarray):
    if not np.all((y == 0) | (y == 1)):
        raise InvalidInputError("Interaction targets must be 0 or 1")


def log_likelihood(y_row: ArrayLike, e_row: ArrayLike) -> Tensor:
    """
    Logistic log-likelihood sum(y log s(e) + (1 - y) log(1 - s(e))) over the last axis,
    summed over rows too when given a matrix. Probabilities are clamped to [1e-12, 1 - 1e-12].
    :raise InvalidInputError: if y holds anything but 0 and 1
    :raise DimensionError: if the shapes differ
    """
    y = as_tensor(y_row).data
    e = as_tensor(e_row)
    if y.shape != e.shape:
        raise DimensionError.for_shapes("log_likelihood", y.shape, e.shape)
    _check_targets(y)
    probability = clip(sigmoid(e), PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
    positive = Tensor(y) * log(probability)
    negative = Tensor(1.0 - y) * log(1.0 - probability)
    return (positive + negative).sum()


def multinomial_log_likelihood(y_row: ArrayLike, e_row: ArrayLike) -> Tensor:
    """sum(y * log softmax(e)) along the item axis."""
    y = as_tensor(y_row).data
    e = as_tensor(e_row)
    if y.shape != e.shape:
        raise DimensionError.for_shapes("multinomial_log_likelihood", y.shape, e.shape)
    _check_targets(y)
    return (Tensor(y) * log_softmax(e, axis=-1)).sum()


def batch_scores(users: Tensor, items: Tensor, batch_users: Sequence[int]) -> Tensor:
    return score_rows(take_rows(users, np.asarray(batch_users, dtype=np.int64)), items)


def rank_items(user_id: int, representations: Representations,
               exclude: Optional[Sequence[int]] = None, k: Optional[int] = None) -> np.ndarray:
    """
    Items ordered by descending score, ties by ascending item id.
    :param user_id: dense user index
    :param representations: eval-mode representations
    :param exclude: item ids never returned, usually the user's training items
    :param k: keep only the first k items
    :raise UnknownNodeError: if user_id is out of range
    """
    if not 0 <= user_id < representations.n_users:
        raise UnknownNodeError(f"Unknown user {user_id}, the model knows {representations.n_users} users")
    scores = representations.items @ representations.users[user_id]
    return rank_scores(scores, exclude, k)


def rank_scores(scores: np.ndarray, exclude: Optional[Sequence[int]] = None, k: Optional[int] = None) -> np.ndarray:
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    if exclude is not None and len(exclude):
        order = order[~np.isin(order, np.asarray(exclude, dtype=np.int64))]
    return order if k is None else order[:k]
