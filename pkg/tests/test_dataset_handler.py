import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import dataset_handler
from dataset_handler import InteractionGraph, derive_co_interaction_neighbors, k_core_filter, split
from helpers.errors import ConfigError, DataError, EmptyDatasetError, IngestionError
from model.numeric import RngStream


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def bare_graph(n_users, n_items, pairs):
    return InteractionGraph(n_users, n_items, np.zeros((n_users, 0)), np.zeros((n_items, 0)), pairs,
                            ((),) * n_users, ((),) * n_items)


# Ingestion ##########################################################################

def test_ingest_keeps_ratings_strictly_above_threshold(tmp_path):
    path = write(tmp_path / "ratings.csv", "user_id,item_id,rating\n"
                                           "u1,i1,5\n"
                                           "u1,i2,2\n"
                                           "u2,i1,4\n"
                                           "u2,i3,3\n")
    graph = dataset_handler.ingest(path, rating_threshold=3.0)
    assert graph.user_ids == ("u1", "u2")
    assert graph.item_ids == ("i1",)
    assert graph.pairs() == {(0, 0), (1, 0)}
    assert graph.user_features.shape == (2, 0)


def test_ingest_accepts_timestamp_column(tmp_path):
    path = write(tmp_path / "ratings.csv", "user_id,item_id,rating,timestamp\n1,7,5,100\n")
    graph = dataset_handler.ingest(path)
    assert graph.pairs() == {(0, 0)}


def test_ingest_sorts_numeric_ids_numerically(tmp_path):
    path = write(tmp_path / "ratings.csv", "user_id,item_id,rating\n10,1,5\n2,1,5\na,1,5\n")
    graph = dataset_handler.ingest(path)
    assert graph.user_ids == ("2", "10", "a")


def test_ingest_deduplicates_pairs(tmp_path):
    path = write(tmp_path / "ratings.csv", "user_id,item_id,rating\nu,i,5\nu,i,4\n")
    assert len(dataset_handler.ingest(path).interactions) == 1


@pytest.mark.parametrize("body, line", [
    ("u1,i1,5\nu1,i2,\n", 3),
    ("u1,i1,5\nu2,i1,5\nu2,i2,high\n", 4),
    ("u1,i1,5\nu1,i2,5,6,7\n", 3),
])
def test_ingest_reports_malformed_line(tmp_path, body, line):
    path = write(tmp_path / "ratings.csv", "user_id,item_id,rating\n" + body)
    with pytest.raises(IngestionError) as e:
        dataset_handler.ingest(path)
    assert e.value.line == line


def test_ingest_rejects_bad_header(tmp_path):
    path = write(tmp_path / "ratings.csv", "user,item,score\nu1,i1,5\n")
    with pytest.raises(IngestionError) as e:
        dataset_handler.ingest(path)
    assert e.value.line == 1


def test_ingest_missing_and_empty_files(tmp_path):
    with pytest.raises(IngestionError):
        dataset_handler.ingest(tmp_path / "nope.csv")
    with pytest.raises(IngestionError):
        dataset_handler.ingest(write(tmp_path / "empty.csv", ""))


def test_ingest_nothing_above_threshold(tmp_path):
    path = write(tmp_path / "ratings.csv", "user_id,item_id,rating\nu1,i1,1\nu2,i1,3\n")
    with pytest.raises(EmptyDatasetError):
        dataset_handler.ingest(path, rating_threshold=3.0)


def test_ingest_features(tmp_path):
    ratings = write(tmp_path / "ratings.csv", "user_id,item_id,rating\nu1,i1,5\nu2,i1,1\nu3,i1,5\n")
    users = write(tmp_path / "users.csv", "id,age,score\nu3,30,0.5\nu2,20,0.1\nu1,10,0.2\n")
    graph = dataset_handler.ingest(ratings, user_feature_file=users)
    # u2 has no positive rating: its row is skipped
    np.testing.assert_array_equal(graph.user_features, [[10.0, 0.2], [30.0, 0.5]])
    assert graph.item_features.shape == (1, 0)


def test_ingest_feature_unknown_id(tmp_path):
    ratings = write(tmp_path / "ratings.csv", "user_id,item_id,rating\nu1,i1,5\n")
    items = write(tmp_path / "items.csv", "id,f1\ni1,1.0\nghost,2.0\n")
    with pytest.raises(IngestionError) as e:
        dataset_handler.ingest(ratings, item_feature_file=items)
    assert e.value.line == 3


def test_ingest_feature_ids_become_nodes_only_when_asked(tmp_path):
    ratings = write(tmp_path / "ratings.csv", "user_id,item_id,rating\nu1,i1,5\n")
    items = write(tmp_path / "items.csv", "id,f1\ni1,1.0\ni2,2.0\n")
    with pytest.raises(IngestionError):
        dataset_handler.ingest(ratings, item_feature_file=items)
    graph = dataset_handler.ingest(ratings, item_feature_file=items, keep_isolated=True)
    assert graph.item_ids == ("i1", "i2")
    np.testing.assert_array_equal(graph.item_features, [[1.0], [2.0]])
    assert graph.pairs() == {(0, 0)}


def test_ingest_feature_not_numeric(tmp_path):
    ratings = write(tmp_path / "ratings.csv", "user_id,item_id,rating\nu1,i1,5\n")
    items = write(tmp_path / "items.csv", "id,f1\ni1,red\n")
    with pytest.raises(IngestionError):
        dataset_handler.ingest(ratings, item_feature_file=items)


def test_ingest_typed_neighbors(tmp_path):
    ratings = write(tmp_path / "ratings.csv", "user_id,item_id,rating\nu1,i1,5\nu2,i2,5\nu3,i1,1\n")
    neighbors = write(tmp_path / "user_neighbors.csv", "id,neighbor_id,neighbor_type\n"
                                                       "u1,u2,user\n"
                                                       "u1,i2,item\n"
                                                       "u1,u1,user\n"
                                                       "u1,u2,user\n"
                                                       "u3,u1,user\n")
    item_neighbors = write(tmp_path / "item_neighbors.csv", "id,neighbor_id\ni1,i2\n")
    graph = dataset_handler.ingest(ratings, user_neighbor_file=neighbors, item_neighbor_file=item_neighbors)
    # self-loop and duplicate dropped, u3 filtered out by the threshold
    assert graph.user_causal_adj == ((1, 3), ())
    assert graph.item_causal_adj == ((3,), ())


def test_ingest_rejects_unknown_neighbor_type(tmp_path):
    ratings = write(tmp_path / "ratings.csv", "user_id,item_id,rating\nu1,i1,5\nu2,i1,5\n")
    neighbors = write(tmp_path / "n.csv", "id,neighbor_id,neighbor_type\nu1,u2,friend\n")
    with pytest.raises(IngestionError) as e:
        dataset_handler.ingest(ratings, user_neighbor_file=neighbors)
    assert e.value.line == 2


# Graph invariants ###################################################################

def test_graph_rejects_self_loops_and_unknown_nodes():
    with pytest.raises(DataError):
        InteractionGraph(2, 1, np.zeros((2, 0)), np.zeros((1, 0)), [[0, 0]], ((0,), ()), ((),))
    with pytest.raises(DataError):
        InteractionGraph(2, 1, np.zeros((2, 0)), np.zeros((1, 0)), [[0, 0]], ((5,), ()), ((),))
    with pytest.raises(DataError):
        InteractionGraph(2, 1, np.zeros((2, 0)), np.zeros((1, 0)), [[0, 0]], ((1, 1), ()), ((),))


def test_graph_rejects_bad_interactions_and_features():
    with pytest.raises(DataError):
        bare_graph(2, 1, [[0, 3]])
    with pytest.raises(DataError):
        InteractionGraph(1, 1, np.array([[np.nan]]), np.zeros((1, 0)), [[0, 0]], ((),), ((),))
    with pytest.raises(DataError):
        InteractionGraph(2, 1, np.zeros((3, 1)), np.zeros((1, 0)), [[0, 0]], ((), ()), ((),))


def test_graph_arrays_are_read_only(toy_graph):
    with pytest.raises(ValueError):
        toy_graph.interactions[0, 0] = 2
    assert toy_graph.user_ids == ("0", "1", "2")
    assert toy_graph.n_nodes == 6
    assert dataset_handler.density(toy_graph) == pytest.approx(6 / 9)


# Co-interaction neighbors ###########################################################

def test_co_interaction_neighbors(toy_graph):
    empty = toy_graph.with_adjacency(((),) * 3, ((),) * 3)
    derived = derive_co_interaction_neighbors(empty)
    assert derived.user_causal_adj[0] == (1, 2, 3, 4)
    assert derived.item_causal_adj[0] == (4, 5, 0, 2)


def test_co_interaction_neighbors_cap(toy_graph):
    empty = toy_graph.with_adjacency(((),) * 3, ((),) * 3)
    derived = derive_co_interaction_neighbors(empty, max_neighbors=1)
    assert derived.user_causal_adj[0] == (1, 3)


def test_co_interaction_neighbors_cap_interacted_nodes_by_degree():
    # item degrees 1, 2, 3 and user degrees 3, 2, 1
    graph = bare_graph(3, 3, [[0, 0], [0, 1], [0, 2], [1, 1], [1, 2], [2, 2]])
    derived = derive_co_interaction_neighbors(graph, max_neighbors=2)
    assert derived.user_causal_adj[0] == (1, 2, 5, 4)
    assert derived.item_causal_adj[2] == (4, 3, 0, 1)


def test_co_interaction_neighbors_keep_existing_in_front(toy_graph):
    derived = derive_co_interaction_neighbors(toy_graph)
    assert derived.user_causal_adj[0] == (1, 3, 2, 4)


def test_co_interaction_neighbors_rank_by_count():
    # user 0 shares two items with user 2 and one with user 1
    graph = bare_graph(3, 3, [[0, 0], [0, 1], [0, 2], [1, 0], [2, 1], [2, 2]])
    derived = derive_co_interaction_neighbors(graph, max_neighbors=None)
    assert derived.user_causal_adj[0][:2] == (2, 1)


# k-core #############################################################################

def test_k_core_removes_cascading():
    graph = bare_graph(3, 2, [[0, 0], [0, 1], [1, 0], [1, 1], [2, 0]])
    core = k_core_filter(graph, 2)
    assert (core.n_users, core.n_items) == (2, 2)
    assert core.user_ids == ("0", "1")
    assert len(core.interactions) == 4


def test_k_core_keeps_satisfying_graph(toy_graph):
    assert k_core_filter(toy_graph, 2) is toy_graph


def test_k_core_remaps_adjacency(toy_graph):
    graph = toy_graph.with_interactions([[0, 0], [0, 1], [1, 1], [1, 0]])
    core = k_core_filter(graph, 2)
    assert (core.n_users, core.n_items) == (2, 2)
    # item 2 (node 5) and user 2 are gone, items 0/1 become nodes 2/3
    assert core.user_causal_adj == ((1, 2), (0, 3))
    assert core.item_causal_adj == ((3, 0), (2, 1))


def test_k_core_can_empty_the_graph(toy_graph):
    core = k_core_filter(toy_graph, 3)
    assert core.is_empty
    with pytest.raises(ConfigError):
        k_core_filter(toy_graph, 0)


@settings(max_examples=60, deadline=None)
@given(st.sets(st.tuples(st.integers(0, 7), st.integers(0, 7)), max_size=40), st.integers(1, 4))
def test_k_core_every_survivor_has_degree_k(pairs, k):
    graph = bare_graph(8, 8, sorted(pairs))
    core = k_core_filter(graph, k)
    users, items = core.degrees()
    assert np.all(users >= k) and np.all(items >= k)
    original = {(graph.user_ids.index(core.user_ids[u]), graph.item_ids.index(core.item_ids[i]))
                for u, i in core.interactions}
    assert original <= graph.pairs()


# Split ##############################################################################

def test_split_is_stratified_and_disjoint(small_splits):
    graph = small_splits.graph
    parts = [set(map(tuple, small_splits.part(name))) for name in ("train", "validation", "test")]
    assert parts[0] | parts[1] | parts[2] == graph.pairs()
    assert not (parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2])
    for user, items in enumerate(graph.user_items()):
        counts = [len(small_splits.user_items(name)[user]) for name in ("train", "validation", "test")]
        assert counts[0] >= 1
        assert counts == dataset_handler._split_counts(len(items), (0.7, 0.1, 0.2))


def test_split_counts_use_largest_remainder():
    assert dataset_handler._split_counts(10, (0.7, 0.1, 0.2)) == [7, 1, 2]
    assert dataset_handler._split_counts(1, (0.7, 0.1, 0.2)) == [1, 0, 0]
    assert dataset_handler._split_counts(2, (0.0, 0.5, 0.5)) == [1, 0, 1]
    assert sum(dataset_handler._split_counts(7, (0.7, 0.1, 0.2))) == 7


def test_split_is_reproducible(small_synthetic):
    first = split(small_synthetic.graph, (0.7, 0.1, 0.2), RngStream("split", 4))
    second = split(small_synthetic.graph, (0.7, 0.1, 0.2), RngStream("split", 4))
    other = split(small_synthetic.graph, (0.7, 0.1, 0.2), RngStream("split", 5))
    assert np.array_equal(first.test, second.test)
    assert not np.array_equal(first.test, other.test)


def test_split_rejects_bad_ratios(toy_graph):
    with pytest.raises(ConfigError):
        split(toy_graph, (0.5, 0.5, 0.5))
    with pytest.raises(ConfigError):
        split(toy_graph, (1.2, -0.1, -0.1))


def test_unknown_part(toy_splits):
    with pytest.raises(ConfigError):
        toy_splits.part("holdout")


# Dump ###############################################################################

def test_dump_and_load(tmp_path, toy_graph):
    dataset_handler.dump_graph(toy_graph, tmp_path, {"source": "test"})
    graph, manifest = dataset_handler.load_graph(tmp_path)
    assert manifest["source"] == "test"
    assert manifest["counts"]["interactions"] == 6
    assert graph.pairs() == toy_graph.pairs()
    assert graph.user_ids == toy_graph.user_ids
    assert graph.user_causal_adj == toy_graph.user_causal_adj
    assert graph.item_causal_adj == toy_graph.item_causal_adj
    np.testing.assert_allclose(graph.item_features, toy_graph.item_features)


def test_load_graph_keeps_isolated_nodes(tmp_path):
    graph = InteractionGraph(2, 3, np.ones((2, 1)), np.arange(3.0).reshape(3, 1), [[0, 0], [1, 0]],
                             ((), ()), ((3, 4), (4, 2), (2, 3)))
    dataset_handler.dump_graph(graph, tmp_path)
    loaded, _ = dataset_handler.load_graph(tmp_path)
    assert loaded.n_items == 3
    assert loaded.item_ids == graph.item_ids
    assert loaded.item_causal_adj == graph.item_causal_adj
    np.testing.assert_allclose(loaded.item_features, graph.item_features)


def test_load_graph_needs_interactions(tmp_path):
    with pytest.raises(IngestionError):
        dataset_handler.load_graph(tmp_path)


def test_prepare_splits(synthetic_dump, small_synthetic):
    splits, reference = dataset_handler.prepare_splits(synthetic_dump, 1, (0.7, 0.1, 0.2), 0)
    assert reference["source"] == "synthetic"
    assert reference["k_core"] == 1
    assert splits.graph.pairs() == small_synthetic.graph.pairs()

    again = dataset_handler.splits_from_reference(reference)
    assert np.array_equal(again.train, splits.train)


def test_prepare_splits_keeps_every_synthetic_node(synthetic_dump, small_synthetic):
    splits, _ = dataset_handler.prepare_splits(synthetic_dump, 1000, (0.7, 0.1, 0.2), 0)
    assert splits.graph.n_items == small_synthetic.graph.n_items
    assert splits.graph.item_causal_adj == small_synthetic.graph.item_causal_adj


def test_prepare_splits_empty_after_k_core(tmp_path, toy_graph):
    dataset_handler.dump_graph(toy_graph, tmp_path, {"source": "ingest"})
    with pytest.raises(EmptyDatasetError):
        dataset_handler.prepare_splits(tmp_path, 1000, (0.7, 0.1, 0.2), 0)


def test_splits_from_reference_missing_keys(synthetic_dump):
    with pytest.raises(DataError):
        dataset_handler.splits_from_reference({"path": str(synthetic_dump)})
