import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autogm.graph import (Dataset, DatasetError, SparseGraph, degree_vector, generate_sbm,
                          load_dataset, load_planetoid, read_any, write_dataset)


def write_files(root, graph="0\t1\n1\t2\n", features="0.5\t1\n2\t-1\n0\t0\n",
                labels="0\n1\n0\n", splits="train\nval\ntest\n"):
    for name, text in [("graph.tsv", graph), ("features.tsv", features),
                       ("labels.tsv", labels), ("splits.tsv", splits)]:
        if text is not None:
            (root / name).write_text(text)
    return root


def test_load_toy_dataset(tmp_path):
    ds = load_dataset(write_files(tmp_path))
    assert ds.node_count == 3
    assert ds.graph.edge_count == 2
    assert ds.class_count == 2
    assert ds.features.shape == (3, 2)
    np.testing.assert_array_equal(ds.labels, [0, 1, 0])


def test_out_of_range_node_reports_file_and_line(tmp_path):
    write_files(tmp_path, graph="0\t1\n5\t1\n")
    with pytest.raises(DatasetError, match=r"graph\.tsv:2: node index out of range"):
        load_dataset(tmp_path)


def test_duplicates_and_reverse_edges_collapse(tmp_path):
    write_files(tmp_path, graph="0\t1\n1\t0\n0\t1\n")
    ds = load_dataset(tmp_path)
    assert ds.graph.edge_count == 1
    assert ds.graph.is_symmetric()


@pytest.mark.parametrize("kwargs, pattern", [
    (dict(features="1\t2\n3\tx\n4\t5\n"), r"features\.tsv:2: non-numeric"),
    (dict(labels="0\n1\n"), r"labels\.tsv.*row-count mismatch"),
    (dict(splits="train\nval\nval\n"), r"empty split 'test'"),
    (dict(splits="train\nval\nholdout\n"), r"splits\.tsv:3: unknown split"),
    (dict(features="1\t2\n3\n4\t5\n"), r"features\.tsv:2: expected 2"),
    (dict(graph="0 1\n"), r"graph\.tsv:1"),
])
def test_malformed_files(tmp_path, kwargs, pattern):
    write_files(tmp_path, **kwargs)
    with pytest.raises(DatasetError, match=pattern):
        load_dataset(tmp_path)


def test_missing_file(tmp_path):
    write_files(tmp_path)
    (tmp_path / "labels.tsv").unlink()
    with pytest.raises(DatasetError, match="labels.tsv: missing file"):
        load_dataset(tmp_path)


def test_self_loops_dropped_with_warning(tmp_path):
    write_files(tmp_path, graph="0\t0\n0\t1\n")
    with pytest.warns(UserWarning, match="self-loop"):
        ds = load_dataset(tmp_path)
    assert ds.graph.edge_count == 1


@pytest.mark.parametrize("graph, expected", [
    (SparseGraph.from_edges(3, [(0, 1), (1, 2)]), [1, 2, 1]),
    (SparseGraph.from_edges(1, []), [0]),
    (SparseGraph.from_edges(4, [(u, v) for u in range(4) for v in range(u + 1, 4)]), [3, 3, 3, 3]),
])
def test_degree_vector(graph, expected):
    np.testing.assert_array_equal(degree_vector(graph), expected)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 15), data=st.data())
def test_from_edges_invariants(n, data):
    edges = data.draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=40))
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        g = SparseGraph.from_edges(n, edges)
    ro, ci = g.row_offsets, g.col_indices
    assert ro[0] == 0 and ro[-1] == 2 * g.edge_count
    assert np.all(np.diff(ro) >= 0)
    for u in range(n):
        row = ci[ro[u]:ro[u + 1]]
        assert np.all(np.diff(row) > 0)
        assert u not in row
    assert g.is_symmetric()
    assert degree_vector(g).sum() == 2 * g.edge_count
    expected = {frozenset(e) for e in edges if e[0] != e[1]}
    assert g.edge_count == len(expected)


def test_invalid_csr_rejected():
    with pytest.raises(DatasetError, match="symmetric"):
        SparseGraph(2, np.array([0, 1, 1]), np.array([1]))
    with pytest.raises(DatasetError, match="self-loops"):
        SparseGraph(2, np.array([0, 1, 2]), np.array([0, 1]))


def test_sbm_example():
    ds = generate_sbm(40, 2, 0.5, 0.05, 8, 0.1, 7)
    assert ds.graph.is_symmetric()
    np.testing.assert_array_equal(np.bincount(ds.labels), [20, 20])
    assert ds.features.shape == (40, 8)
    # stratified 20/30/50 per class
    for c in range(2):
        tags = ds.split[ds.labels == c]
        assert [np.sum(tags == s) for s in ("train", "val", "test")] == [4, 6, 10]


def test_sbm_without_cross_edges():
    ds = generate_sbm(60, 3, 0.3, 0.0, 3, 0.0, 1)
    e = ds.graph.edges()
    assert np.all(ds.labels[e[:, 0]] == ds.labels[e[:, 1]])


def test_sbm_deterministic(tmp_path):
    a = generate_sbm(50, 2, 0.3, 0.05, 4, 0.2, 11)
    b = generate_sbm(50, 2, 0.3, 0.05, 4, 0.2, 11)
    assert a == b
    write_dataset(a, tmp_path / "a")
    write_dataset(b, tmp_path / "b")
    for name in ("graph.tsv", "features.tsv", "labels.tsv", "splits.tsv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert generate_sbm(50, 2, 0.3, 0.05, 4, 0.2, 12) != a


@pytest.mark.parametrize("args", [
    (3, 4, 0.5, 0.1, 4, 0.1, 0),
    (10, 1, 0.5, 0.1, 4, 0.1, 0),
    (10, 2, 0.1, 0.5, 4, 0.1, 0),
    (10, 2, 0.5, -0.1, 4, 0.1, 0),
    (10, 2, 0.5, 0.1, 4, -1.0, 0),
])
def test_sbm_bounds(args):
    with pytest.raises(ValueError):
        generate_sbm(*args)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), noise=st.floats(0, 3))
def test_write_load_round_trip(tmp_path_factory, seed, noise):
    ds = generate_sbm(30, 3, 0.3, 0.05, 5, noise, seed)
    root = write_dataset(ds, tmp_path_factory.mktemp("ds"))
    assert load_dataset(root) == ds


def test_dataset_validation():
    g = SparseGraph.from_edges(3, [(0, 1)])
    with pytest.raises(DatasetError, match="two classes"):
        Dataset(g, np.zeros((3, 1)), [0, 0, 0], ["train", "val", "test"])
    with pytest.raises(DatasetError, match="rows"):
        Dataset(g, np.zeros((2, 1)), [0, 1, 0], ["train", "val", "test"])
    with pytest.raises(DatasetError, match="empty"):
        Dataset(g, np.zeros((3, 1)), [0, 1, 0], ["train", "val", "val"])


def test_planetoid_loader(tmp_path):
    import pickle
    from collections import defaultdict

    import scipy.sparse as sp

    rng = np.random.default_rng(0)
    n_all, n_test, n_train, d0, C = 520, 4, 3, 5, 3
    n = n_all + n_test

    def onehot(labels):
        out = np.zeros((len(labels), C))
        out[np.arange(len(labels)), labels] = 1
        return out

    feats = rng.random((n, d0))
    labels = rng.integers(0, C, n)
    test_index = [n - 1, n - 3, n - 2, n - 4]  # unsorted, as in the real files
    objs = {
        "x": sp.csr_matrix(feats[:n_train]), "y": onehot(labels[:n_train]),
        "allx": sp.csr_matrix(feats[:n_all]), "ally": onehot(labels[:n_all]),
        # rows of tx follow the order of the test.index file
        "tx": sp.csr_matrix(feats[test_index]), "ty": onehot(labels[test_index]),
        "graph": defaultdict(list, {0: [1, 2], 1: [0], 2: [0], n - 1: [0]}),
    }
    for part, obj in objs.items():
        with open(tmp_path / f"ind.toy.{part}", "wb") as fh:
            pickle.dump(obj, fh)
    (tmp_path / "ind.toy.test.index").write_text("\n".join(map(str, test_index)))

    ds = load_planetoid(tmp_path)
    assert ds.node_count == n
    # after reordering, node i carries its own features and label
    np.testing.assert_allclose(ds.features, feats)
    np.testing.assert_array_equal(ds.labels, labels)
    assert np.sum(ds.split == "train") == n_train
    assert np.sum(ds.split == "val") == 500
    assert np.sum(ds.split == "test") == n_test
    assert ds.graph.edge_count == 3
    assert read_any(tmp_path) == ds
