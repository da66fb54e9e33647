"""
Training objective: the clean ELBO, the counterfactual ELBO obtained by intervening on
the preference scores, and their lambda-weighted combination.

Per batch, reconstruction and the user KL are averaged over the batch users. The item KL
is divided by the number of training users, so one pass over all users counts it once.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from helpers.errors import ConfigError
from model import decoder
from model.encoder import LatentState
from model.numeric import RngStream, Tensor, kl_diag_normal, sigmoid, take_rows

logger = logging.getLogger(__name__)

CLEAN = "clean"
COUNTERFACTUAL = "counterfactual"
DISTRIBUTIONS = ("normal", "uniform", "point")

Scalar = Union[Tensor, float]


@dataclass(frozen=True)
class InterventionSpec:
    """
    clean mode keeps the observed preferences, do(e = o).
    counterfactual mode replaces them, do(e = e'), with e' drawn i.i.d. from distribution:
    normal (params = mean, std), uniform (params = low, high) or point (params[0] = value).
    """
    mode: str = COUNTERFACTUAL
    distribution: str = "normal"
    params: Tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.mode not in (CLEAN, COUNTERFACTUAL):
            raise ConfigError(f"intervention mode must be clean or counterfactual, got '{self.mode}'")
        if self.mode == COUNTERFACTUAL:
            if self.distribution not in DISTRIBUTIONS:
                raise ConfigError(f"counterfactual distribution must be one of {', '.join(DISTRIBUTIONS)}, "
                                  f"got '{self.distribution}'")
            if self.distribution == "normal" and self.params[1] <= 0:
                raise ConfigError(f"normal counterfactual scale must be > 0, got {self.params[1]}")
            if self.distribution == "uniform" and self.params[0] >= self.params[1]:
                raise ConfigError(f"uniform counterfactual needs low < high, got {self.params}")

    @classmethod
    def from_train(cls, train) -> "InterventionSpec":
        return cls(COUNTERFACTUAL, train.cf_distribution, tuple(train.cf_params))

    def draw(self, shape: Tuple[int, ...], rng: RngStream) -> np.ndarray:
        if self.distribution == "normal":
            return rng.normal(shape, loc=self.params[0], scale=self.params[1])
        if self.distribution == "uniform":
            return rng.uniform(self.params[0], self.params[1], shape)
        return np.full(shape, float(self.params[0]))


@dataclass(frozen=True)
class Batch:
    users: np.ndarray
    targets: np.ndarray
    n_train_users: int

    @property
    def size(self) -> int:
        return len(self.users)


@dataclass(frozen=True)
class CounterfactualBatch:
    users: np.ndarray
    scores: np.ndarray
    targets: np.ndarray
    n_train_users: int

    @property
    def size(self) -> int:
        return len(self.users)


@dataclass
class ElboTerms:
    elbo: Tensor
    reconstruction: Tensor
    kl: Tensor


@dataclass(frozen=True)
class LossBreakdown:
    """
    total is the augmented ELBO (maximized); loss is what the optimizer minimizes,
    the negated total plus the L2 penalty.
    """
    reconstruction: float
    kl: float
    elbo_clean: float
    elbo_cf: Optional[float]
    total: float
    loss: float
    lambda_: float

    def __add__(self, other: "LossBreakdown") -> "LossBreakdown":
        cf = None if self.elbo_cf is None or other.elbo_cf is None else self.elbo_cf + other.elbo_cf
        return LossBreakdown(self.reconstruction + other.reconstruction, self.kl + other.kl,
                             self.elbo_clean + other.elbo_clean, cf, self.total + other.total,
                             self.loss + other.loss, self.lambda_)

    def scaled(self, factor: float) -> "LossBreakdown":
        return LossBreakdown(self.reconstruction * factor, self.kl * factor, self.elbo_clean * factor,
                             None if self.elbo_cf is None else self.elbo_cf * factor, self.total * factor,
                             self.loss * factor, self.lambda_)


def _reconstruction(targets: np.ndarray, scores: Tensor, likelihood: str) -> Tensor:
    if likelihood == "multinomial":
        return decoder.multinomial_log_likelihood(targets, scores)
    return decoder.log_likelihood(targets, scores)


def kl_terms(users: np.ndarray, n_train_users: int, state: LatentState) -> Tensor:
    user_kl = kl_diag_normal(take_rows(state.user_mu, users), take_rows(state.user_sigma_sq, users))
    item_kl = kl_diag_normal(state.item_mu, state.item_sigma_sq)
    return user_kl / float(len(users)) + item_kl / float(n_train_users)


def elbo_clean(batch: Batch, state: LatentState, likelihood: str = "logistic") -> ElboTerms:
    """
    One-sample (or n-sample average) estimate of E[log p(y | e)] - KL(q(u)) - KL(q(v)),
    with e the inner product of sampled representations.
    """
    user_samples = state.user_samples or [state.user_mu]
    item_samples = state.item_samples or [state.item_mu]
    reconstruction = None
    for users, items in zip(user_samples, item_samples):
        scores = decoder.batch_scores(users, items, batch.users)
        term = _reconstruction(batch.targets, scores, likelihood)
        reconstruction = term if reconstruction is None else reconstruction + term
    reconstruction = reconstruction / float(len(user_samples) * batch.size)
    kl = kl_terms(batch.users, batch.n_train_users, state)
    return ElboTerms(reconstruction - kl, reconstruction, kl)


def make_counterfactual(batch: Batch, spec: InterventionSpec, rng: RngStream) -> CounterfactualBatch:
    """
    Intervenes on every preference score of the batch: e' ~ spec, then y' ~ Bernoulli(sigmoid(e')).
    """
    if spec.mode != COUNTERFACTUAL:
        raise ConfigError("make_counterfactual needs a counterfactual intervention spec")
    scores = spec.draw(batch.targets.shape, rng)
    targets = rng.bernoulli(sigmoid(scores).numpy())
    return CounterfactualBatch(batch.users, scores, targets, batch.n_train_users)


def elbo_counterfactual(batch: CounterfactualBatch, state: LatentState, likelihood: str = "logistic") -> ElboTerms:
    """
    Same form as the clean ELBO, but the intervened scores e' replace the decoder output,
    so the reconstruction term does not depend on the encoder. KL terms are shared.
    """
    reconstruction = _reconstruction(batch.targets, Tensor(batch.scores), likelihood) / float(batch.size)
    kl = kl_terms(batch.users, batch.n_train_users, state)
    return ElboTerms(reconstruction - kl, reconstruction, kl)


def loss_augmented(clean: Scalar, counterfactual: Optional[Scalar], lambda_: float) -> Scalar:
    """
    lambda * clean + (1 - lambda) * counterfactual, a quantity to maximize.
    lambda = 1 returns clean untouched and lambda = 0 returns counterfactual untouched.
    :raise ConfigError: if lambda is outside [0, 1] or the needed ELBO is missing
    """
    if not 0.0 <= lambda_ <= 1.0:
        raise ConfigError(f"lambda must be in [0, 1], got {lambda_}")
    if lambda_ == 1.0:
        return clean
    if counterfactual is None:
        raise ConfigError(f"lambda={lambda_} needs the counterfactual ELBO")
    if lambda_ == 0.0:
        return counterfactual
    return lambda_ * clean + (1.0 - lambda_) * counterfactual
