import numpy as np
import pytest

from dataset_handler import InteractionGraph
from helpers.errors import DimensionError, EncoderConsistencyError, InvalidInputError, NumericOverflowError
from model.encoder import (EVAL, TRAIN, EncoderConfig, EncoderGraph, aggregate, causal_message, draw_exogenous,
                           encode, gcn_message_variant, init_encoder_params, layer_aggregate)
from model.numeric import ModelParams, RngStream, RngStreams, Tape, Tensor

SMALL = EncoderConfig(h_dim=3, latent_dim=2, n_layers=2, z_dim=1, dropout=0.0, node_embeddings=True)


def edges(n_nodes, pairs):
    targets, sources = zip(*pairs) if pairs else ((), ())
    return EncoderGraph(n_nodes, 0, np.zeros((n_nodes, 0)), np.zeros((0, 0)),
                        np.array(targets, dtype=np.int64), np.array(sources, dtype=np.int64))


@pytest.fixture
def toy_encoder_graph(toy_graph):
    return EncoderGraph.from_graph(toy_graph)


@pytest.fixture
def toy_params(toy_encoder_graph):
    return ModelParams(init_encoder_params(SMALL, toy_encoder_graph, RngStream("init", 0)))


def test_encoder_graph_edge_list(toy_graph, toy_encoder_graph):
    assert toy_encoder_graph.targets.tolist() == [0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5]
    assert toy_encoder_graph.sources.tolist() == [1, 3, 0, 4, 1, 5, 4, 0, 3, 1, 4, 2]
    np.testing.assert_allclose(toy_encoder_graph.user_features.mean(axis=0), 0.0, atol=1e-12)


def test_encoder_graph_rejects_unknown_neighbor(toy_graph):
    with pytest.raises(EncoderConsistencyError):
        EncoderGraph.from_graph(toy_graph, [(1,), (), (), (), (), (9,)])
    with pytest.raises(EncoderConsistencyError):
        EncoderGraph.from_graph(toy_graph, [(1,)])


def test_param_shapes(toy_params):
    shapes = toy_params.shapes()
    assert shapes["user_input"] == (2, 3)
    assert shapes["node_offset"] == (6, 3)
    assert shapes["message_1"] == (6, 3)
    assert shapes["aggregate_2"] == (7, 3)
    assert shapes["item_sigma_weight"] == (3, 2)
    assert shapes["item_sigma_bias"] == (2,)


def test_gcn_params_replace_message_weights(toy_encoder_graph):
    params = init_encoder_params(EncoderConfig(h_dim=3, encoder="gcn"), toy_encoder_graph, RngStream("init", 0))
    assert "gcn_1" in params and "message_1" not in params


def test_default_config_has_no_node_offsets(toy_encoder_graph):
    cfg = EncoderConfig()
    assert not cfg.node_embeddings and cfg.message_norm == "mean"
    params = init_encoder_params(cfg, toy_encoder_graph, RngStream("init", 0))
    assert "node_offset" not in params
    with_offsets = init_encoder_params(EncoderConfig(node_embeddings=True), toy_encoder_graph, RngStream("init", 0))
    np.testing.assert_array_equal(params["item_sigma_weight"], with_offsets["item_sigma_weight"])


# Messages ###########################################################################

def test_zero_message_weight_gives_zero_message():
    hidden = Tensor(np.random.default_rng(0).normal(size=(3, 2)))
    message = causal_message(hidden, edges(3, [(0, 1), (0, 2), (1, 0)]), Tensor(np.zeros((4, 2))))
    np.testing.assert_array_equal(message.data, np.zeros((3, 2)))


def test_message_hand_computed():
    hidden = Tensor([[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]])
    weight = Tensor([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]])
    message = causal_message(hidden, edges(3, [(0, 1)]), weight)
    # gate = relu([1, 2]), message = h_1 * gate
    np.testing.assert_array_equal(message.data, [[3.0, -2.0], [0.0, 0.0], [0.0, 0.0]])

    weight = Tensor([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    message = causal_message(hidden, edges(3, [(0, 1)]), weight)
    # gate = relu(h_1) = [3, 0]
    np.testing.assert_array_equal(message.data[0], [9.0, 0.0])


def test_mean_message_divides_by_neighbor_count():
    hidden = Tensor([[1.0, 2.0], [3.0, -1.0], [1.0, 1.0]])
    weight = Tensor([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]])
    graph = edges(3, [(0, 1), (0, 2)])
    summed = causal_message(hidden, graph, weight)
    # gate = relu(h_0) = [1, 2] on both edges
    np.testing.assert_array_equal(summed.data[0], [4.0, 0.0])
    mean = causal_message(hidden, graph, weight, normalize=True)
    np.testing.assert_array_equal(mean.data, [[2.0, 0.0], [0.0, 0.0], [0.0, 0.0]])


def test_message_without_edges_is_zero():
    hidden = Tensor(np.ones((2, 3)))
    message = causal_message(hidden, edges(2, []), Tensor(np.ones((6, 3))))
    np.testing.assert_array_equal(message.data, np.zeros((2, 3)))


def test_aggregate():
    hidden = Tensor([[1.0, -1.0]])
    message = Tensor([[2.0, 0.5]])
    exogenous = np.array([[3.0]])
    np.testing.assert_array_equal(aggregate(hidden, message, exogenous, Tensor(np.zeros((5, 2)))).data, [[0.0, 0.0]])

    weight = np.zeros((5, 2))
    weight[0, 0] = weight[2, 1] = 1.0
    out = aggregate(hidden, message, exogenous, Tensor(weight)).data
    np.testing.assert_array_equal(out, [[1.0, 2.0]])

    weight[4, 0] = -1.0
    with_z = aggregate(hidden, message, exogenous, Tensor(weight)).data
    without_z = aggregate(hidden, message, np.zeros((1, 1)), Tensor(weight)).data
    assert not np.array_equal(with_z, without_z)

    with pytest.raises(DimensionError):
        aggregate(hidden, Tensor(np.zeros((2, 2))), exogenous, Tensor(weight))


def test_layer_aggregate():
    x = Tensor(np.arange(6.0).reshape(3, 2))
    assert layer_aggregate([x]) is x
    np.testing.assert_array_equal(layer_aggregate([x, x]).data, 2 * x.data)
    layers = [np.random.default_rng(i).normal(size=(3, 2)) for i in range(3)]
    np.testing.assert_allclose(layer_aggregate([Tensor(a) for a in layers]).data, layers[0] + layers[1] + layers[2])


def test_gcn_isolated_node():
    hidden = Tensor([[1.0, -2.0], [0.5, 0.5]])
    weight = Tensor([[1.0, 2.0], [3.0, -1.0]])
    out = gcn_message_variant(hidden, edges(2, []), weight)
    np.testing.assert_allclose(out.data, np.maximum(hidden.data @ weight.data, 0.0))


def test_gcn_identical_neighbors():
    hidden = Tensor(np.tile([[1.0, 2.0]], (3, 1)))
    weight = Tensor(np.eye(2))
    two = gcn_message_variant(hidden, edges(3, [(0, 1), (0, 2)]), weight)
    one = gcn_message_variant(hidden, edges(3, [(0, 1)]), weight)
    np.testing.assert_allclose(two.data[0], one.data[0])


def test_gcn_line_graph():
    hidden = Tensor([[1.0], [2.0], [4.0]])
    graph = edges(3, [(0, 1), (1, 0), (1, 2), (2, 1)])
    out = gcn_message_variant(hidden, graph, Tensor([[1.0]]))
    np.testing.assert_allclose(out.data[:, 0], [1.5, 7.0 / 3.0, 3.0])


# Encode #############################################################################

def test_encode_hand_computed_single_layer():
    graph = InteractionGraph(2, 1, np.array([[1.0], [3.0]]), np.array([[5.0]]), [[0, 0], [1, 0]],
                             ((1,), ()), ((0,),))
    egraph = EncoderGraph.from_graph(graph)
    cfg = EncoderConfig(h_dim=1, latent_dim=1, n_layers=1, z_dim=0, dropout=0.0, node_embeddings=True)
    params = ModelParams({
        "user_input": [[1.0]], "item_input": [[1.0]],
        "node_offset": [[2.0], [2.0], [1.0]],
        "message_1": [[0.0], [1.0]], "aggregate_1": [[1.0], [1.0]],
        "user_mu_weight": [[0.5]], "user_mu_bias": [0.1],
        "user_sigma_weight": [[0.0]], "user_sigma_bias": [0.0],
        "item_mu_weight": [[2.0]], "item_mu_bias": [0.0],
        "item_sigma_weight": [[0.0]], "item_sigma_bias": [0.0],
    })
    state = encode(egraph, params, cfg)
    # standardized features: users (-1, 1), item 0; h0 = (1, 3, 1); m = (9, 0, 1); h1 = (10, 3, 2)
    np.testing.assert_allclose(state.hidden.data[:, 0], [10.0, 3.0, 2.0])
    np.testing.assert_allclose(state.user_mu.data[:, 0], [5.1, 1.6])
    np.testing.assert_allclose(state.item_mu.data[:, 0], [4.0])
    np.testing.assert_array_equal(state.user_sigma_sq.data, [[1.0], [1.0]])


def test_encode_eval_is_deterministic(toy_encoder_graph, toy_params):
    first = encode(toy_encoder_graph, toy_params, SMALL)
    second = encode(toy_encoder_graph, toy_params, SMALL)
    assert np.array_equal(first.users.data, second.users.data)
    assert np.array_equal(first.items.data, second.items.data)
    assert first.users is first.user_mu


def test_variance_is_at_least_one(toy_encoder_graph, toy_params):
    state = encode(toy_encoder_graph, toy_params, SMALL)
    assert np.all(state.user_sigma_sq.data >= 1.0) and np.all(state.item_sigma_sq.data >= 1.0)
    plain = encode(toy_encoder_graph, toy_params, EncoderConfig(h_dim=3, latent_dim=2, z_dim=1, variance="exp"))
    assert np.all(plain.user_sigma_sq.data > 0.0)


def test_log_variance_is_bounded(toy_encoder_graph, toy_params):
    high = toy_params.replace({f"{kind}_sigma_bias": np.full(2, 50.0) for kind in ("user", "item")})
    state = encode(toy_encoder_graph, high, SMALL)
    np.testing.assert_allclose(state.user_sigma_sq.data, np.exp(10.0))
    np.testing.assert_allclose(state.item_sigma_sq.data, np.exp(10.0))

    low = toy_params.replace({f"{kind}_sigma_bias": np.full(2, -50.0) for kind in ("user", "item")})
    plain = encode(toy_encoder_graph, low, EncoderConfig(h_dim=3, latent_dim=2, z_dim=1, node_embeddings=True,
                                                         variance="exp"))
    np.testing.assert_allclose(plain.user_sigma_sq.data, np.exp(-10.0))


def test_fresh_variance_heads_start_near_one(toy_encoder_graph, toy_params):
    state = encode(toy_encoder_graph, toy_params, SMALL)
    np.testing.assert_allclose(state.user_sigma_sq.data, 1.0, atol=0.5)
    np.testing.assert_allclose(state.item_sigma_sq.data, 1.0, atol=0.5)


def test_train_mode_samples(toy_encoder_graph, toy_params):
    exogenous = draw_exogenous(toy_encoder_graph, SMALL, RngStream("exogenous", 0))
    assert exogenous.shape == (6, 1)
    state = encode(toy_encoder_graph, toy_params, SMALL, TRAIN, RngStreams(0), exogenous, n_samples=3)
    assert len(state.user_samples) == 3
    assert state.users.shape == (3, 2)
    assert not np.array_equal(state.users.data, state.user_mu.data)
    again = encode(toy_encoder_graph, toy_params, SMALL, TRAIN, RngStreams(0), exogenous, n_samples=3)
    assert np.array_equal(state.users.data, again.users.data)


def test_train_mode_needs_streams(toy_encoder_graph, toy_params):
    with pytest.raises(InvalidInputError):
        encode(toy_encoder_graph, toy_params, SMALL, TRAIN)


def test_disabled_messages_ignore_adjacency(toy_graph, toy_params):
    cfg = EncoderConfig(h_dim=3, latent_dim=2, n_layers=2, z_dim=1, causal_messages=False)
    with_edges = encode(EncoderGraph.from_graph(toy_graph), toy_params, cfg)
    without = encode(EncoderGraph.from_graph(toy_graph, [()] * 6), toy_params, cfg)
    assert np.array_equal(with_edges.users.data, without.users.data)


def test_encode_is_equivariant_to_user_permutation(toy_graph, toy_encoder_graph, toy_params):
    order = [2, 0, 1]
    new_id = {old: new for new, old in enumerate(order)}

    def relabel(node):
        return new_id[node] if node < 3 else node

    adjacency = toy_graph.user_causal_adj + toy_graph.item_causal_adj
    permuted_adjacency = [tuple(relabel(n) for n in adjacency[old]) for old in order] + \
                         [tuple(relabel(n) for n in row) for row in adjacency[3:]]
    permuted = InteractionGraph(3, 3, toy_graph.user_features[order], toy_graph.item_features,
                                [[new_id[u], i] for u, i in toy_graph.interactions],
                                tuple(permuted_adjacency[:3]), tuple(permuted_adjacency[3:]))
    offsets = toy_params["node_offset"].data
    permuted_params = toy_params.replace({"node_offset": np.vstack([offsets[order], offsets[3:]])})

    original = encode(toy_encoder_graph, toy_params, SMALL)
    moved = encode(EncoderGraph.from_graph(permuted), permuted_params, SMALL)
    np.testing.assert_allclose(moved.users.data, original.users.data[order], atol=1e-12)
    np.testing.assert_allclose(moved.items.data, original.items.data, atol=1e-12)


def test_overflow_names_the_layer(toy_encoder_graph, toy_params):
    params = toy_params.replace({"node_offset": np.full((6, 3), 1e300), "message_1": np.ones((6, 3))})
    with pytest.raises(NumericOverflowError) as e:
        encode(toy_encoder_graph, params, SMALL)
    assert e.value.layer == 1


def test_encoder_gradients_match_finite_differences(toy_encoder_graph, toy_params):
    rng = np.random.default_rng(8)
    exogenous = rng.normal(size=(6, 1))
    user_weights, item_weights = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    # non-zero head biases keep all-zero hidden rows away from the ReLU kink
    toy_params = toy_params.replace({f"{kind}_{head}_bias": np.full(2, 0.25)
                                     for kind in ("user", "item") for head in ("mu", "sigma")})

    def loss_of(params):
        state = encode(toy_encoder_graph, params, SMALL, TRAIN, RngStreams(1), exogenous)
        return ((state.users * Tensor(user_weights)).sum() + (state.items * Tensor(item_weights)).sum()
                + state.user_sigma_sq.mean() + state.item_sigma_sq.mean())

    with Tape() as tape:
        loss = loss_of(toy_params)
    grads = tape.backward(loss, list(toy_params.values()))

    eps = 1e-6
    for name, tensor in toy_params.items():
        analytic = grads[tensor]
        numeric = np.zeros(tensor.shape)
        for index in np.ndindex(tensor.shape):
            plus, minus = tensor.numpy(), tensor.numpy()
            plus[index] += eps
            minus[index] -= eps
            numeric[index] = (loss_of(toy_params.replace({name: plus})).item()
                              - loss_of(toy_params.replace({name: minus})).item()) / (2 * eps)
        scale = max(1.0, float(np.max(np.abs(numeric))))
        assert np.max(np.abs(analytic - numeric)) / scale < 1e-4, name
