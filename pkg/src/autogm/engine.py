"""Message-passing engine: neighbor sampling, aggregation operators, forward pass."""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
import scipy.sparse as sp

from .graph import Dataset, SparseGraph


class AggregationStrategy(IntEnum):
    """Self-loop choice (S/N) combined with normalization (A/S/N).

    Integer values are the codes used by the search-space encoding.
    """

    NN = 0
    NS = 1
    NA = 2
    SN = 3
    SS = 4
    SA = 5

    @property
    def self_loop(self) -> bool:
        return self.name[0] == "S"

    @property
    def normalization(self) -> str:
        return {"A": "asymmetric", "S": "symmetric", "N": "none"}[self.name[1]]

    @classmethod
    def parse(cls, value) -> "AggregationStrategy":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise ValueError(f"unknown aggregation strategy {value!r}") from None
        if isinstance(value, (bool, np.bool_)):
            raise ValueError(f"unknown aggregation strategy {value!r}")
        try:
            return cls(int(value))
        except (ValueError, TypeError):
            raise ValueError(f"unknown aggregation strategy {value!r}") from None


@dataclass(frozen=True)
class ParamSet:
    """The five parameters ``(d, k, w, l, a)`` that define one algorithm."""

    d: int
    k: int
    w: int
    l: bool
    a: AggregationStrategy

    def __post_init__(self):
        for name in ("d", "k", "w"):
            v = getattr(self, name)
            if isinstance(v, (bool, np.bool_)) or int(v) != v:
                raise ValueError(f"{name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.d < 1:
            raise ValueError(f"d must be positive, got {self.d}")
        if self.k < 1:
            raise ValueError(f"k must be positive, got {self.k}")
        if self.w != -1 and self.w < 1:
            raise ValueError(f"w must be -1 or positive, got {self.w}")
        object.__setattr__(self, "l", bool(self.l))
        object.__setattr__(self, "a", AggregationStrategy.parse(self.a))

    def as_tuple(self):
        return (self.d, self.k, self.w, self.l, self.a)

    def __str__(self):
        return f"(d={self.d}, k={self.k}, w={self.w}, l={self.l}, a={self.a.name})"


_PAD_MAX_DEGREE = 64


def _check_width(w: int):
    if w != -1 and w < 1:
        raise ValueError(f"w must be -1 or >= 1, got {w}")


def sample_neighbors(graph: SparseGraph, w: int, rng: np.random.Generator) -> sp.csr_matrix:
    """Draw ``w`` neighbors per node; entry ``(u, v)`` counts how often ``v`` was drawn.

    Nodes with at least ``w`` neighbors draw without replacement; nodes with
    fewer neighbors draw with replacement, so every non-isolated row sums to
    exactly ``w``.  ``w == -1`` returns the adjacency itself.  Repeated
    draws are stored as duplicate entries, which sparse products sum.
    """
    _check_width(w)
    if w == -1:
        return graph.adjacency
    n = graph.node_count
    ro, ci = graph.row_offsets, graph.col_indices
    deg = np.diff(ro)
    take = np.where(deg > 0, w, 0)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(take, out=indptr[1:])
    indices = np.empty(indptr[-1], dtype=np.int64)

    few = (deg > 0) & (deg < w)
    if few.any():
        # with replacement
        rows = np.flatnonzero(few)
        picks = ro[rows, None] + (rng.random((rows.size, w)) * deg[rows, None]).astype(np.int64)
        dest = indptr[rows, None] + np.arange(w)
        indices[dest.ravel()] = ci[picks.ravel()]

    # without replacement: per row, keep the w edges with the smallest random keys
    rows = np.flatnonzero((deg >= w) & (deg <= _PAD_MAX_DEGREE))
    if rows.size:
        rdeg = deg[rows]
        width = int(rdeg.max())
        keys = rng.random((rows.size, width))
        keys[np.arange(width) >= rdeg[:, None]] = 2.0
        if w < width:
            slots = np.argpartition(keys, w - 1, axis=1)[:, :w]
        else:
            slots = np.broadcast_to(np.arange(w), (rows.size, w))
        dest = (indptr[rows, None] + np.arange(w)).ravel()
        indices[dest] = ci[(ro[rows, None] + slots).ravel()]

    rows = np.flatnonzero((deg >= w) & (deg > _PAD_MAX_DEGREE))
    if rows.size:
        # high-degree rows: one sort over their edges instead of a padded matrix
        rdeg = deg[rows]
        owner = np.repeat(np.arange(rows.size), rdeg)
        first = np.cumsum(rdeg) - rdeg
        order = np.argsort(owner + rng.random(owner.size))
        slot = np.arange(owner.size) - first[owner]
        edges = np.repeat(ro[rows] - first, rdeg) + order
        dest = (indptr[rows, None] + np.arange(w)).ravel()
        indices[dest] = ci[edges[slot < w]]

    return sp.csr_matrix((np.ones(indices.size), indices, indptr), shape=(n, n))


def _with_self_loops(m: sp.csr_matrix) -> sp.csr_matrix:
    n = m.shape[0]
    indptr = m.indptr.astype(np.int64) + np.arange(n + 1)
    diag_pos = indptr[1:] - 1
    is_diag = np.zeros(indptr[-1], dtype=bool)
    is_diag[diag_pos] = True
    data = np.empty(indptr[-1])
    indices = np.empty(indptr[-1], dtype=np.int64)
    data[~is_diag] = m.data
    indices[~is_diag] = m.indices
    data[diag_pos] = 1.0
    indices[diag_pos] = np.arange(n)
    return sp.csr_matrix((data, indices, indptr), shape=m.shape)


def build_aggregation(sampled: sp.spmatrix, a, *, literal_degree: bool = False) -> sp.csr_matrix:
    """Aggregation matrix for strategy ``a`` from a sampled adjacency.

    Degrees are row sums of the matrix being normalized (so they include the
    self-loop for S* strategies).  ``literal_degree=True`` instead takes
    degrees from ``sampled`` alone.  Zero degrees normalize to zero.
    """
    a = AggregationStrategy.parse(a)
    m = sp.csr_matrix(sampled, dtype=np.float64)
    n = m.shape[0]
    rows_sampled = np.repeat(np.arange(n), np.diff(m.indptr))
    sampled_deg = np.bincount(rows_sampled, weights=m.data, minlength=n)
    if a.self_loop:
        m = _with_self_loops(m)
    else:
        m = sp.csr_matrix((m.data.copy(), m.indices, m.indptr), shape=m.shape)
    norm = a.normalization
    if norm == "none":
        return m
    deg = sampled_deg if literal_degree or not a.self_loop else sampled_deg + 1.0
    rows = np.repeat(np.arange(n), np.diff(m.indptr))
    with np.errstate(divide="ignore"):
        if norm == "asymmetric":
            inv = np.where(deg > 0, 1.0 / deg, 0.0)
            m.data *= inv[rows]
        else:
            inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(deg), 0.0)
            m.data *= inv_sqrt[rows] * inv_sqrt[m.indices]
    return m


def pixie_width(k: int, budget: int = 2000) -> int:
    """Width that keeps ``k * w`` within a fixed walk budget."""
    if k < 1 or budget < k:
        raise ValueError(f"need 1 <= k <= budget, got k={k}, budget={budget}")
    return budget // k


PRESET_NAMES = ("pagerank", "pixie", "gcn", "graphsage", "sgcn")


def preset(name: str, pixie_k: int | None = None) -> ParamSet:
    """ParamSet reproducing a known algorithm."""
    name = name.lower()
    if name == "pixie":
        if pixie_k is None:
            raise ValueError("pixie preset requires pixie_k")
        return ParamSet(1, pixie_k, pixie_width(pixie_k), False, AggregationStrategy.NA)
    if pixie_k is not None:
        raise ValueError("pixie_k only applies to the pixie preset")
    table = {
        "pagerank": (1, 30, -1, False, AggregationStrategy.NA),
        "gcn": (64, 2, -1, True, AggregationStrategy.SS),
        "graphsage": (64, 2, 25, True, AggregationStrategy.SA),
        "sgcn": (64, 2, -1, False, AggregationStrategy.SS),
    }
    if name not in table:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    return ParamSet(*table[name])


def _layers(weights):
    return list(getattr(weights, "layers", weights))


def check_layer_shapes(layers, d0: int, params: ParamSet):
    if len(layers) != params.k:
        raise ValueError(f"expected {params.k} layer matrices, got {len(layers)}")
    for i, W in enumerate(layers):
        want = (d0 if i == 0 else params.d, params.d)
        if W.shape != want:
            raise ValueError(f"layer {i + 1} has shape {W.shape}, expected {want}")


def dropout_mask(shape, rate: float, rng: np.random.Generator):
    if rate <= 0:
        return None
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _apply(agg, x, W):
    # A(XW) and (AX)W are equal; multiply through the smaller width first
    if W.shape[1] <= W.shape[0]:
        return agg @ (x @ W)
    return (agg @ x) @ W


def propagate(graph: SparseGraph, x0, params: ParamSet, weights, rng=None, *,
              train_mode: bool = False, dropout: float = 0.0,
              literal_degree: bool = False, cache: list | None = None) -> np.ndarray:
    """Run ``k`` rounds of sample -> aggregate -> transform -> nonlinearity.

    ``rng`` feeds neighbor sampling (and dropout in train mode); it may be
    ``None`` when ``w == -1`` and no dropout is applied.  When ``cache`` is a
    list, per-layer intermediates are appended for backpropagation.
    """
    layers = _layers(weights)
    x = np.asarray(x0, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    check_layer_shapes(layers, x.shape[1], params)
    use_dropout = train_mode and dropout > 0
    if rng is None and (params.w != -1 or use_dropout):
        raise ValueError("an rng is required for sampling or dropout")
    fixed_agg = None
    if params.w == -1:
        fixed_agg = build_aggregation(graph.adjacency, params.a, literal_degree=literal_degree)
    for W in layers:
        mask = dropout_mask(x.shape, dropout, rng) if use_dropout else None
        x_in = x * mask if mask is not None else x
        if fixed_agg is not None:
            agg = fixed_agg
        else:
            agg = build_aggregation(sample_neighbors(graph, params.w, rng), params.a,
                                    literal_degree=literal_degree)
        z = _apply(agg, x_in, W)
        x = np.maximum(z, 0.0) if params.l else z
        if cache is not None:
            cache.append((x_in, mask, agg, z))
    return x


def forward(dataset: Dataset, params: ParamSet, weights, rng=None, train_mode: bool = False,
            *, dropout: float = 0.0, literal_degree: bool = False) -> np.ndarray:
    """Node embeddings ``X_k`` (``n x d``) for ``dataset`` under ``params``."""
    return propagate(dataset.graph, dataset.features, params, weights, rng,
                     train_mode=train_mode, dropout=dropout, literal_degree=literal_degree)
