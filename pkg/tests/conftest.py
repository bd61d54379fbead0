import numpy as np
import pytest

from autogm.graph import Dataset, SparseGraph, generate_sbm
from autogm.trainer import loss_and_gradient


def dense_adjacency(n, edges):
    """Binary symmetric adjacency built edge by edge, without the CSR code path."""
    A = np.zeros((n, n))
    for u, v in edges:
        if u != v:
            A[u, v] = A[v, u] = 1.0
    return A


def dense_aggregation(A, strategy):
    """Aggregation matrix from its textbook definition on dense arrays."""
    name = strategy if isinstance(strategy, str) else strategy.name
    M = A + np.eye(len(A)) if name[0] == "S" else A.copy()
    deg = M.sum(axis=1)
    if name[1] == "N":
        return M
    inv = np.array([1.0 / x if x > 0 else 0.0 for x in deg])
    if name[1] == "A":
        return np.diag(inv) @ M
    inv_sqrt = np.sqrt(inv)
    return np.diag(inv_sqrt) @ M @ np.diag(inv_sqrt)


def dense_forward(A, X0, layers, strategy, nonlinear):
    agg = dense_aggregation(A, strategy)
    X = X0
    for W in layers:
        X = agg @ X @ W
        if nonlinear:
            X = np.where(X > 0, X, 0.0)
    return X


def random_graph_edges(rng, n, p):
    return [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p]


def make_dataset(graph, features, labels, class_count=None, seed=0):
    """Dataset with a round-robin train/val/test split."""
    n = graph.node_count
    split = np.array([("train", "val", "test")[i % 3] for i in range(n)])
    return Dataset(graph, features, labels, split, class_count)


def power_iteration(A, n, steps, c=0.85):
    """PageRank-style propagation written directly from its recurrence."""
    deg = A.sum(axis=1)
    x = np.full(n, 1.0 / n)
    for _ in range(steps):
        new = np.zeros(n)
        for u in range(n):
            if deg[u]:
                new[u] = c * sum(A[u, v] * x[v] for v in range(n)) / deg[u]
        x = new
    return x


def finite_difference(dataset, params, weights, step=1e-5, **kwargs):
    out = []
    for W in weights.matrices:
        g = np.zeros_like(W)
        for idx in np.ndindex(W.shape):
            saved = W[idx]
            W[idx] = saved + step
            up = loss_and_gradient(dataset, params, weights, **kwargs)[0]
            W[idx] = saved - step
            down = loss_and_gradient(dataset, params, weights, **kwargs)[0]
            W[idx] = saved
            g[idx] = (up - down) / (2 * step)
        out.append(g)
    return out


def max_rel_error(a, b):
    return max(float(np.max(np.abs(x - y) / np.maximum(np.abs(x) + np.abs(y), 1e-8))) for x, y in zip(a, b))


@pytest.fixture
def sbm40():
    return generate_sbm(40, 2, 0.5, 0.05, 8, 0.1, 7)


@pytest.fixture
def path3():
    return SparseGraph.from_edges(3, [(0, 1), (1, 2)])


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
