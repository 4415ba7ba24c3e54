"""Attributed network loading: edge lists, attribute triplets, labels, vocab sidecars.

All text formats are UTF-8, one record per line, whitespace-delimited unless an
explicit delimiter is given, with ``#``-prefixed comment lines ignored.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    """Malformed or inconsistent input file."""

    def __init__(self, message: str, path=None, lineno: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:{lineno}: " if lineno is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.lineno = lineno


def _records(path, delimiter: str | None) -> Iterator[tuple[int, list[str]]]:
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise GraphFormatError(f"cannot read file ({exc.strerror})", path) from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if delimiter is None:
                fields = stripped.split()
            else:
                fields = [f.strip() for f in stripped.split(delimiter)]
            yield lineno, fields


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph in CSR form with sorted neighbor lists.

    ``ids[i]`` is the external identifier of internal node ``i``.
    """

    indptr: np.ndarray
    indices: np.ndarray
    ids: tuple[str, ...]
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._index:
            object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.ids)})

    @property
    def node_count(self) -> int:
        return len(self.ids)

    @property
    def edge_count(self) -> int:
        return int(self.indices.size // 2)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def index_of(self, external_id: str) -> int:
        try:
            return self._index[external_id]
        except KeyError:
            raise KeyError(f"unknown node id {external_id!r}") from None

    def __contains__(self, external_id: str) -> bool:
        return external_id in self._index

    def edges(self) -> np.ndarray:
        """Unordered edge list as an (E, 2) array with ``u < v``."""
        src = np.repeat(np.arange(self.node_count), self.degrees)
        keep = src < self.indices
        return np.column_stack([src[keep], self.indices[keep]])

    def same_structure(self, other: "Graph") -> bool:
        return (
            self.ids == other.ids
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )

    @classmethod
    def from_edges(cls, edges, ids: Sequence[str]) -> "Graph":
        """Build from an (E, 2) array of internal indices.

        Direction is ignored, duplicates collapse and self-loops are dropped.
        """
        n = len(ids)
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        edges = edges[edges[:, 0] != edges[:, 1]]
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        adj = sp.csr_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(n, n))
        adj.sum_duplicates()
        adj.sort_indices()
        return cls(
            indptr=adj.indptr.astype(np.int64),
            indices=adj.indices.astype(np.int32),
            ids=tuple(ids),
        )


def load_edge_list(path, delimiter: str | None = None) -> Graph:
    """Read an undirected edge list; node ids are interned in first-appearance order."""
    index: dict[str, int] = {}
    pairs: list[tuple[int, int]] = []
    self_loops = 0
    for lineno, fields in _records(path, delimiter):
        if len(fields) != 2 or not all(fields):
            raise GraphFormatError(f"expected 'src dst', got {len(fields)} field(s)", path, lineno)
        u = index.setdefault(fields[0], len(index))
        v = index.setdefault(fields[1], len(index))
        if u == v:
            self_loops += 1
            continue
        pairs.append((u, v))
    if not index:
        raise GraphFormatError("empty graph", path)
    if self_loops:
        log.warning("%s: dropped %d self-loop(s)", path, self_loops)
    graph = Graph.from_edges(np.array(pairs, dtype=np.int64).reshape(-1, 2), list(index))
    log.info("loaded %s: %d nodes, %d edges", path, graph.node_count, graph.edge_count)
    return graph


def write_edge_list(graph: Graph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for u, v in graph.edges():
            fh.write(f"{graph.ids[u]}\t{graph.ids[v]}\n")


@dataclass(frozen=True, eq=False)
class AttributeMatrix:
    """Sparse non-negative node-attribute weights, indexed by row and by column."""

    rows: sp.csr_matrix
    cols: sp.csc_matrix

    @classmethod
    def from_triplets(cls, nodes, attrs, weights, node_count: int, attr_count: int | None = None):
        nodes = np.asarray(nodes, dtype=np.int64)
        attrs = np.asarray(attrs, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.float64)
        if weights.size and weights.min() < 0:
            raise ValueError("attribute weights must be non-negative")
        if attr_count is None:
            attr_count = int(attrs.max()) + 1 if attrs.size else 0
        mat = sp.coo_matrix((weights, (nodes, attrs)), shape=(node_count, attr_count)).tocsr()
        mat.sum_duplicates()
        mat.eliminate_zeros()
        mat.sort_indices()
        return cls(rows=mat, cols=mat.tocsc())

    @classmethod
    def empty(cls, node_count: int) -> "AttributeMatrix":
        return cls.from_triplets([], [], [], node_count, 0)

    @property
    def node_count(self) -> int:
        return self.rows.shape[0]

    @property
    def attr_count(self) -> int:
        return self.rows.shape[1]

    @property
    def nnz(self) -> int:
        return int(self.rows.nnz)

    @property
    def total(self) -> float:
        return float(self.rows.data.sum())

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.rows.indptr[i], self.rows.indptr[i + 1]
        return self.rows.indices[lo:hi], self.rows.data[lo:hi]

    def column(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.cols.indptr[j], self.cols.indptr[j + 1]
        return self.cols.indices[lo:hi], self.cols.data[lo:hi]

    def triplets(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(node, attr, weight) arrays sorted by (node, attr)."""
        nodes = np.repeat(np.arange(self.node_count), np.diff(self.rows.indptr))
        return nodes, self.rows.indices.astype(np.int64), self.rows.data

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.cols.sum(axis=0)).ravel()


def load_attributes(path, graph: Graph, delimiter: str | None = None, strict: bool = True,
                    attr_count: int | None = None) -> AttributeMatrix:
    """Read ``node attr weight`` triplets. ``attr`` is a non-negative integer column index.

    Duplicate triplets sum their weights; zero weights are dropped. With
    ``strict=False`` lines naming nodes absent from ``graph`` are skipped.
    """
    nodes, attrs, weights = [], [], []
    skipped = 0
    for lineno, fields in _records(path, delimiter):
        if len(fields) != 3:
            raise GraphFormatError(f"expected 'node attr weight', got {len(fields)} field(s)", path, lineno)
        node, attr, weight = fields
        try:
            a = int(attr)
            w = float(weight)
        except ValueError:
            raise GraphFormatError(f"bad attribute index or weight in {fields!r}", path, lineno) from None
        if a < 0:
            raise GraphFormatError(f"negative attribute index {a}", path, lineno)
        if not np.isfinite(w) or w < 0:
            raise GraphFormatError(f"weight must be finite and non-negative, got {weight}", path, lineno)
        if node not in graph:
            if strict:
                raise GraphFormatError(f"unknown node id {node!r}", path, lineno)
            skipped += 1
            continue
        nodes.append(graph.index_of(node))
        attrs.append(a)
        weights.append(w)
    if skipped:
        log.warning("%s: skipped %d triplet(s) with unknown node ids", path, skipped)
    if attr_count is not None and attrs and max(attrs) >= attr_count:
        raise GraphFormatError(f"attribute index {max(attrs)} exceeds attr_count {attr_count}", path)
    matrix = AttributeMatrix.from_triplets(nodes, attrs, weights, graph.node_count, attr_count)
    log.info("loaded %s: %d attributes, nnz=%d", path, matrix.attr_count, matrix.nnz)
    return matrix


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Partial node labelling; ``labels[i] == -1`` marks an unlabeled node."""

    labels: np.ndarray
    class_names: tuple[str, ...]

    @property
    def class_count(self) -> int:
        return len(self.class_names)

    @property
    def labeled(self) -> np.ndarray:
        return np.flatnonzero(self.labels >= 0)

    def __len__(self) -> int:
        return int((self.labels >= 0).sum())

    def class_sizes(self) -> np.ndarray:
        return np.bincount(self.labels[self.labels >= 0], minlength=self.class_count)


def load_labels(path, graph: Graph, delimiter: str | None = None) -> LabelMap:
    """Read ``node class`` lines; class names are interned in first-appearance order."""
    labels = np.full(graph.node_count, -1, dtype=np.int64)
    classes: dict[str, int] = {}
    for lineno, fields in _records(path, delimiter):
        if len(fields) != 2:
            raise GraphFormatError(f"expected 'node class', got {len(fields)} field(s)", path, lineno)
        node, name = fields
        if node not in graph:
            raise GraphFormatError(f"unknown node id {node!r}", path, lineno)
        labels[graph.index_of(node)] = classes.setdefault(name, len(classes))
    return LabelMap(labels=labels, class_names=tuple(classes))


def write_vocab(ids: Sequence[str], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in ids:
            fh.write(f"{s}\n")


def read_vocab(path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    return text.splitlines()


def graph_from_vocab(path) -> Graph:
    """Edgeless graph carrying only the id mapping; enough to resolve ids for search/eval."""
    ids = read_vocab(path)
    return Graph.from_edges(np.empty((0, 2), dtype=np.int64), ids)
