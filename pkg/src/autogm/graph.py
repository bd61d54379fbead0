"""Graph and dataset containers, TSV/Planetoid loaders and the SBM fixture."""
from __future__ import annotations

import pickle
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

SPLITS = ("train", "val", "test")
# Nodes outside the public Planetoid splits; never produced by generate_sbm.
UNLABELED = "unlabeled"
SPLIT_TAGS = SPLITS + (UNLABELED,)

DATASET_FILES = ("graph.tsv", "features.tsv", "labels.tsv", "splits.tsv")


class DatasetError(ValueError):
    """Raised for malformed dataset files or inconsistent dataset contents."""


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SparseGraph:
    """Undirected, unweighted graph stored as symmetric CSR without self-loops.

    Use :meth:`from_edges` to build one from an arbitrary edge list.
    """

    node_count: int
    row_offsets: np.ndarray
    col_indices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", _frozen(self.row_offsets, np.int64))
        object.__setattr__(self, "col_indices", _frozen(self.col_indices, np.int64))
        n = self.node_count
        ro, ci = self.row_offsets, self.col_indices
        if ro.shape != (n + 1,) or ro[0] != 0 or ro[-1] != ci.size:
            raise DatasetError("row_offsets must have length n+1, start at 0 and end at nnz")
        if np.any(np.diff(ro) < 0):
            raise DatasetError("row_offsets must be non-decreasing")
        if ci.size and (ci.min() < 0 or ci.max() >= n):
            raise DatasetError("column index out of range")
        rows = np.repeat(np.arange(n), np.diff(ro))
        if np.any(rows == ci):
            raise DatasetError("self-loops are not allowed in the stored adjacency")
        # strictly increasing within each row
        same_row = rows[1:] == rows[:-1]
        if np.any(ci[1:][same_row] <= ci[:-1][same_row]):
            raise DatasetError("column indices must be strictly increasing within a row")
        if ci.size % 2:
            raise DatasetError("adjacency is not symmetric")
        t = sp.csr_matrix((np.ones(ci.size), ci, ro), shape=(n, n))
        if (t != t.T).nnz:
            raise DatasetError("adjacency is not symmetric")

    @classmethod
    def from_edges(cls, node_count: int, edges, *, warn_self_loops: bool = True) -> "SparseGraph":
        """Build a graph from ``(u, v)`` pairs.

        The edge list is symmetrized and deduplicated; self-loops are dropped
        with a warning.
        """
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= node_count):
            raise DatasetError("node index out of range")
        loops = e[:, 0] == e[:, 1]
        if loops.any():
            if warn_self_loops:
                warnings.warn(f"dropping {int(loops.sum())} self-loop(s)", stacklevel=2)
            e = e[~loops]
        both = np.concatenate([e, e[:, ::-1]])
        both = np.unique(both, axis=0) if both.size else both
        row_offsets = np.zeros(node_count + 1, dtype=np.int64)
        np.add.at(row_offsets, both[:, 0] + 1, 1)
        return cls(node_count, np.cumsum(row_offsets), both[:, 1].copy())

    @property
    def edge_count(self) -> int:
        return self.col_indices.size // 2

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Binary adjacency as a float64 CSR matrix (read-only by convention)."""
        ones = np.ones(self.col_indices.size)
        return sp.csr_matrix((ones, self.col_indices, self.row_offsets),
                             shape=(self.node_count, self.node_count))

    def edges(self) -> np.ndarray:
        """Each undirected edge once, as an ``(m, 2)`` array with ``u < v``."""
        rows = np.repeat(np.arange(self.node_count), np.diff(self.row_offsets))
        keep = rows < self.col_indices
        return np.column_stack([rows[keep], self.col_indices[keep]])

    def is_symmetric(self) -> bool:
        a = self.adjacency
        return (a != a.T).nnz == 0

    def __eq__(self, other):
        if not isinstance(other, SparseGraph):
            return NotImplemented
        return (self.node_count == other.node_count
                and np.array_equal(self.row_offsets, other.row_offsets)
                and np.array_equal(self.col_indices, other.col_indices))

    __hash__ = None


def degree_vector(graph: SparseGraph) -> np.ndarray:
    return np.diff(graph.row_offsets)


@dataclass(frozen=True, eq=False)
class Dataset:
    """A graph with node features, integer labels and a train/val/test split."""

    graph: SparseGraph
    features: np.ndarray
    labels: np.ndarray
    split: np.ndarray
    class_count: int = field(default=None)

    def __post_init__(self):
        n = self.graph.node_count
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats[:, None]
        object.__setattr__(self, "features", _frozen(feats, np.float64))
        object.__setattr__(self, "labels", _frozen(self.labels, np.int64))
        object.__setattr__(self, "split", _frozen(self.split, "<U9"))
        if self.class_count is None:
            object.__setattr__(self, "class_count", int(self.labels.max()) + 1 if n else 0)
        if self.features.shape[0] != n:
            raise DatasetError(f"features have {self.features.shape[0]} rows, graph has {n} nodes")
        if self.labels.shape != (n,) or self.split.shape != (n,):
            raise DatasetError("labels and split must have one entry per node")
        if self.class_count < 2:
            raise DatasetError("need at least two classes")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise DatasetError("label outside [0, class_count)")
        bad = ~np.isin(self.split, SPLIT_TAGS)
        if bad.any():
            raise DatasetError(f"unknown split tag {self.split[bad][0]!r}")
        for name in SPLITS:
            if not np.any(self.split == name):
                raise DatasetError(f"split {name!r} is empty")

    @property
    def node_count(self) -> int:
        return self.graph.node_count

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def mask(self, split: str) -> np.ndarray:
        if split not in SPLIT_TAGS:
            raise ValueError(f"unknown split {split!r}")
        return self.split == split

    def with_features(self, features) -> "Dataset":
        return Dataset(self.graph, features, self.labels, self.split, self.class_count)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.graph == other.graph
                and self.class_count == other.class_count
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.split, other.split))

    __hash__ = None


# ---------------------------------------------------------------------------
# TSV directory format
# ---------------------------------------------------------------------------

def _read_lines(path: Path):
    if not path.is_file():
        raise DatasetError(f"{path.name}: missing file ({path})")
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def load_dataset(dir_path) -> Dataset:
    """Read ``graph.tsv``, ``features.tsv``, ``labels.tsv`` and ``splits.tsv``.

    Errors carry the offending file name and 1-based line number.
    """
    root = Path(dir_path)
    for name in DATASET_FILES:
        if not (root / name).is_file():
            raise DatasetError(f"{name}: missing file ({root / name})")

    feat_lines = _read_lines(root / "features.tsv")
    n = len(feat_lines)
    rows = []
    width = None
    for lineno, line in enumerate(feat_lines, 1):
        tokens = line.split("\t") if line else []
        try:
            row = [float(t) for t in tokens]
        except ValueError:
            raise DatasetError(f"features.tsv:{lineno}: non-numeric feature token in {line!r}") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DatasetError(f"features.tsv:{lineno}: expected {width} values, got {len(row)}")
        rows.append(row)
    features = np.array(rows, dtype=np.float64).reshape(n, width or 0)

    labels = []
    label_lines = _read_lines(root / "labels.tsv")
    for lineno, line in enumerate(label_lines, 1):
        try:
            lab = int(line.strip())
        except ValueError:
            raise DatasetError(f"labels.tsv:{lineno}: non-integer label {line!r}") from None
        if lab < 0:
            raise DatasetError(f"labels.tsv:{lineno}: negative label {lab}")
        labels.append(lab)
    if len(labels) != n:
        raise DatasetError(f"labels.tsv:{len(labels)}: row-count mismatch "
                           f"({len(labels)} labels vs {n} feature rows)")

    split = [s.strip() for s in _read_lines(root / "splits.tsv")]
    for lineno, tag in enumerate(split, 1):
        if tag not in SPLIT_TAGS:
            raise DatasetError(f"splits.tsv:{lineno}: unknown split tag {tag!r}")
    if len(split) != n:
        raise DatasetError(f"splits.tsv:{len(split)}: row-count mismatch "
                           f"({len(split)} tags vs {n} feature rows)")
    for name in SPLITS:
        if name not in split:
            raise DatasetError(f"splits.tsv: empty split {name!r}")

    edges = []
    for lineno, line in enumerate(_read_lines(root / "graph.tsv"), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DatasetError(f"graph.tsv:{lineno}: expected 'u<TAB>v', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise DatasetError(f"graph.tsv:{lineno}: non-integer node id in {line!r}") from None
        for node in (u, v):
            if not 0 <= node < n:
                raise DatasetError(f"graph.tsv:{lineno}: node index out of range ({node} not in [0, {n}))")
        edges.append((u, v))

    graph = SparseGraph.from_edges(n, edges)
    labels = np.array(labels, dtype=np.int64)
    class_count = int(labels.max()) + 1 if n else 0
    if class_count < 2:
        raise DatasetError("labels.tsv: need at least two classes")
    return Dataset(graph, features, labels, np.array(split), class_count)


def write_dataset(dataset: Dataset, dir_path) -> Path:
    """Write ``dataset`` in the TSV directory format; inverse of :func:`load_dataset`."""
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    edges = dataset.graph.edges()
    (root / "graph.tsv").write_text("".join(f"{u}\t{v}\n" for u, v in edges.tolist()), encoding="utf-8")
    (root / "features.tsv").write_text(
        "".join("\t".join(map(repr, row)) + "\n" for row in dataset.features.tolist()),
        encoding="utf-8")
    (root / "labels.tsv").write_text("".join(f"{y}\n" for y in dataset.labels.tolist()), encoding="utf-8")
    (root / "splits.tsv").write_text("".join(f"{s}\n" for s in dataset.split.tolist()), encoding="utf-8")
    return root


# ---------------------------------------------------------------------------
# Planetoid (ind.<name>.*) raw files
# ---------------------------------------------------------------------------

def _planetoid_name(root: Path):
    found = sorted(root.glob("ind.*.graph"))
    return found[0].name.split(".")[1] if found else None


def is_planetoid_dir(dir_path) -> bool:
    return _planetoid_name(Path(dir_path)) is not None


def load_planetoid(dir_path, name: str | None = None) -> Dataset:
    """Load the public Planetoid split (e.g. Cora: 140 train / 500 val / 1000 test).

    Nodes outside the three public splits are tagged ``"unlabeled"``.  The raw
    files are not bundled; download ``ind.<name>.*`` yourself.
    """
    root = Path(dir_path)
    name = name or _planetoid_name(root)
    if name is None:
        raise DatasetError(f"no ind.<name>.graph file in {root}")
    objs = {}
    for part in ("x", "y", "tx", "ty", "allx", "ally", "graph"):
        path = root / f"ind.{name}.{part}"
        if not path.is_file():
            raise DatasetError(f"{path.name}: missing file")
        with path.open("rb") as fh:
            objs[part] = pickle.load(fh, encoding="latin1")
    index_path = root / f"ind.{name}.test.index"
    if not index_path.is_file():
        raise DatasetError(f"{index_path.name}: missing file")
    test_index = [int(t) for t in index_path.read_text().split()]
    test_sorted = np.sort(test_index)

    tx, ty = objs["tx"], objs["ty"]
    if name == "citeseer":
        # isolated test nodes have no rows in tx/ty; pad with zeros
        full = np.arange(test_sorted.min(), test_sorted.max() + 1)
        tx_ext = sp.lil_matrix((full.size, tx.shape[1]))
        tx_ext[test_sorted - test_sorted.min(), :] = tx
        ty_ext = np.zeros((full.size, np.asarray(ty).shape[1]))
        ty_ext[test_sorted - test_sorted.min(), :] = ty
        tx, ty = tx_ext, ty_ext

    features = sp.vstack([sp.csr_matrix(objs["allx"]), sp.csr_matrix(tx)]).tolil()
    features[test_index, :] = features[test_sorted, :]
    onehot = np.vstack([np.asarray(objs["ally"]), np.asarray(ty)])
    onehot[test_index, :] = onehot[test_sorted, :]
    labels = onehot.argmax(axis=1)
    n = features.shape[0]

    graph_dict = objs["graph"]
    edges = [(u, v) for u, nbrs in graph_dict.items() for v in nbrs if u < n and v < n]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        graph = SparseGraph.from_edges(n, edges)

    split = np.full(n, UNLABELED, dtype="<U9")
    n_train = np.asarray(objs["y"]).shape[0]
    split[:n_train] = "train"
    split[n_train:n_train + 500] = "val"
    split[test_index] = "test"
    return Dataset(graph, features.toarray(), labels, split, onehot.shape[1])


def read_any(dir_path) -> Dataset:
    """Load either the TSV directory format or raw Planetoid files."""
    if is_planetoid_dir(dir_path) and not (Path(dir_path) / "graph.tsv").exists():
        return load_planetoid(dir_path)
    return load_dataset(dir_path)


# ---------------------------------------------------------------------------
# Synthetic stochastic block model
# ---------------------------------------------------------------------------

def generate_sbm(n: int, communities: int, p_in: float, p_out: float, d0: int,
                 noise: float, seed: int) -> Dataset:
    """Stochastic-block-model dataset with balanced labels.

    Features are one-hot community indicators (padded to ``d0`` columns)
    plus Gaussian noise of scale ``noise``.  Splits are 20/30/50 train/val/test,
    stratified by label.
    """
    if not n >= communities >= 2:
        raise ValueError("require n >= communities >= 2")
    if not 0 <= p_out <= p_in <= 1:
        raise ValueError("require 0 <= p_out <= p_in <= 1")
    if d0 < communities:
        raise ValueError("d0 must be at least the number of communities")
    if noise < 0:
        raise ValueError("noise must be non-negative")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % communities)

    same = labels[:, None] == labels[None, :]
    prob = np.where(same, p_in, p_out)
    draws = rng.random((n, n))
    iu = np.triu_indices(n, k=1)
    hit = draws[iu] < prob[iu]
    edges = np.column_stack([iu[0][hit], iu[1][hit]])
    graph = SparseGraph.from_edges(n, edges)

    features = np.zeros((n, d0))
    features[np.arange(n), labels] = 1.0
    features += rng.normal(0.0, noise, size=(n, d0)) if noise > 0 else 0.0

    split = np.empty(n, dtype="<U9")
    for c in range(communities):
        members = rng.permutation(np.flatnonzero(labels == c))
        n_train = max(1, int(round(0.2 * members.size)))
        n_val = max(1, int(round(0.3 * members.size)))
        split[members[:n_train]] = "train"
        split[members[n_train:n_train + n_val]] = "val"
        split[members[n_train + n_val:]] = "test"
    return Dataset(graph, features, labels, split, communities)
