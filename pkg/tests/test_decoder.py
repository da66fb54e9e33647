import math

import numpy as np
import pytest

from helpers.errors import DimensionError, InvalidInputError, UnknownNodeError
from model.decoder import (Representations, batch_scores, log_likelihood, multinomial_log_likelihood, rank_items,
                           rank_scores, score, score_rows)
from model.numeric import Tape, Tensor


def test_score():
    assert score([1.0, 0.0, 0.0], [1.0, 0.0, 0.0]).item() == 1.0
    assert score([0.0, 0.0], [3.0, -7.0]).item() == 0.0
    np.testing.assert_array_equal(score([[1.0, 2.0], [3.0, 4.0]], [[1.0, 1.0], [0.0, 2.0]]).data, [3.0, 8.0])
    with pytest.raises(DimensionError):
        score([1.0, 2.0], [1.0, 2.0, 3.0])


def test_score_rows_and_batch_scores():
    users = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
    items = np.array([[3.0, 1.0], [0.5, 0.5]])
    np.testing.assert_array_equal(score_rows(users, items).data, users @ items.T)
    np.testing.assert_array_equal(batch_scores(Tensor(users), Tensor(items), [2, 0]).data, (users @ items.T)[[2, 0]])
    with pytest.raises(DimensionError):
        score_rows(users, np.ones((2, 3)))


def test_log_likelihood_examples():
    assert log_likelihood([1.0], [0.0]).item() == pytest.approx(math.log(0.5))
    assert log_likelihood([1.0], [0.0]).item() == pytest.approx(-0.693147, abs=1e-6)
    assert log_likelihood([0.0], [-1000.0]).item() == pytest.approx(0.0, abs=1e-9)


def test_log_likelihood_clamps_saturated_scores():
    value = log_likelihood([1.0], [-1000.0]).item()
    assert value == pytest.approx(math.log(1e-12))
    assert np.isfinite(value)


def test_log_likelihood_matches_formula():
    y = np.array([[1.0, 0.0, 1.0], [0.0, 0.0, 1.0]])
    e = np.array([[0.3, -1.2, 2.0], [0.1, 0.7, -0.4]])
    p = 1.0 / (1.0 + np.exp(-e))
    expected = np.sum(y * np.log(p) + (1 - y) * np.log(1 - p))
    assert log_likelihood(y, e).item() == pytest.approx(expected, rel=1e-12)


def test_log_likelihood_gradient_is_y_minus_sigmoid():
    y = np.array([1.0, 0.0, 1.0])
    e = Tensor([0.3, -1.2, 2.0], requires_grad=True)
    with Tape() as tape:
        value = log_likelihood(y, e)
    grad = tape.backward(value, [e])[e]
    np.testing.assert_allclose(grad, y - 1.0 / (1.0 + np.exp(-e.data)), rtol=1e-10)


def test_log_likelihood_rejects_non_binary_targets():
    with pytest.raises(InvalidInputError):
        log_likelihood([0.5], [0.0])
    with pytest.raises(DimensionError):
        log_likelihood([1.0, 0.0], [0.0])


def test_multinomial_log_likelihood():
    y = np.array([[1.0, 0.0, 1.0]])
    e = np.array([[1.0, 2.0, 3.0]])
    log_p = e - np.log(np.exp(e).sum())
    assert multinomial_log_likelihood(y, e).item() == pytest.approx(float(log_p[0, 0] + log_p[0, 2]))
    with pytest.raises(InvalidInputError):
        multinomial_log_likelihood([[2.0]], [[0.0]])


def test_rank_items_breaks_ties_by_id():
    reps = Representations(users=np.array([[1.0]]), items=np.array([[0.2], [0.9], [0.5]]))
    assert rank_items(0, reps).tolist() == [1, 2, 0]
    tied = Representations(users=np.array([[1.0]]), items=np.array([[0.5], [0.9], [0.5], [0.5]]))
    assert rank_items(0, tied).tolist() == [1, 0, 2, 3]


def test_rank_items_exclude_and_k():
    reps = Representations(users=np.array([[1.0]]), items=np.array([[0.2], [0.9], [0.5], [0.7]]))
    assert rank_items(0, reps, exclude=[1]).tolist() == [3, 2, 0]
    assert rank_items(0, reps, exclude=[1], k=2).tolist() == [3, 2]
    assert rank_scores(np.array([0.1, 0.3]), k=5).tolist() == [1, 0]


def test_rank_items_unknown_user():
    reps = Representations(users=np.zeros((2, 1)), items=np.zeros((3, 1)))
    with pytest.raises(UnknownNodeError):
        rank_items(2, reps)
    with pytest.raises(LookupError):
        rank_items(-1, reps)


def test_representations_score_matrix():
    reps = Representations(users=np.array([[1.0, 2.0]]), items=np.array([[1.0, 0.0], [0.0, 1.0]]))
    np.testing.assert_array_equal(reps.score_matrix(), [[1.0, 2.0]])
    assert (reps.n_users, reps.n_items) == (1, 2)
