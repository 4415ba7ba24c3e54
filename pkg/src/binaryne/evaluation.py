"""Retrieval evaluation: averaged precision@K and MAP@K with every labeled node as a query."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .codes import CodeMatrix
from .graph import AttributeMatrix, LabelMap
from .search import RankedResult, batch_top_k

log = logging.getLogger(__name__)

DEFAULT_KS = (100, 200, 500)


@dataclass(frozen=True)
class EvalConfig:
    ks: tuple[int, ...] = DEFAULT_KS
    exclude_query: bool = True

    def check(self, labels: LabelMap) -> None:
        if not self.ks or min(self.ks) < 1:
            raise ValueError("cutoffs must be positive")
        limit = len(labels) - 1
        if max(self.ks) > limit:
            raise ValueError(f"K={max(self.ks)} exceeds labeled node count - 1 ({limit})")


def _nodes(ranked) -> np.ndarray:
    return ranked.nodes if isinstance(ranked, RankedResult) else np.asarray(ranked)


def _relevance(ranked, query: int, labels: LabelMap, k: int) -> np.ndarray:
    cls = labels.labels[query]
    if cls < 0:
        raise ValueError(f"query node {query} is unlabeled")
    nodes = _nodes(ranked)
    if nodes.size < k:
        raise ValueError(f"ranked list has {nodes.size} entries, need {k}")
    return labels.labels[nodes[:k]] == cls


def precision_at_k(ranked, query: int, labels: LabelMap, k: int) -> float:
    """Fraction of the top ``k`` results sharing the query's class."""
    return float(_relevance(ranked, query, labels, k).sum()) / k


def relevant_count(query: int, labels: LabelMap, exclude_query: bool = True) -> int:
    """Same-class nodes in V, the AP denominator (the query itself excluded by default)."""
    size = int((labels.labels == labels.labels[query]).sum())
    return size - 1 if exclude_query else size


def average_precision(ranked, query: int, labels: LabelMap, k: int, exclude_query: bool = True) -> float:
    """Sum of precision@i at relevant ranks i <= k, over the query's relevant-node count.

    A query with no other member in its class scores 0.
    """
    rel = _relevance(ranked, query, labels, k)
    denom = relevant_count(query, labels, exclude_query)
    if denom == 0:
        return 0.0
    hits = np.cumsum(rel)
    return float((hits / np.arange(1, k + 1))[rel].sum() / denom)


def map_at_k(aps: Sequence[float]) -> float:
    aps = np.asarray(aps, dtype=np.float64)
    if aps.size == 0:
        raise ValueError("no queries")
    return float(aps.mean())


@dataclass
class EvalReport:
    method: str
    ks: tuple[int, ...]
    precision: dict[int, float]
    map: dict[int, float]
    query_ms: float
    memory_bytes: int
    queries: int
    zero_denominator: int = 0
    per_query_precision: dict[int, np.ndarray] = field(default_factory=dict, repr=False)
    per_query_ap: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    def columns(self) -> list[str]:
        cols = ["method"]
        for k in self.ks:
            cols += [f"precision@{k}", f"MAP@{k}"]
        return cols + ["query_ms", "memory_bytes"]

    def row(self) -> list[str]:
        cells = [self.method]
        for k in self.ks:
            cells += [f"{self.precision[k]:.4f}", f"{self.map[k]:.4f}"]
        return cells + [f"{self.query_ms:.4f}", str(self.memory_bytes)]


def format_tsv(reports: Sequence[EvalReport]) -> str:
    lines = ["\t".join(reports[0].columns())]
    lines += ["\t".join(r.row()) for r in reports]
    return "\n".join(lines) + "\n"


def format_table(reports: Sequence[EvalReport]) -> str:
    rows = [reports[0].columns()] + [r.row() for r in reports]
    widths = [max(len(row[c]) for row in rows) for c in range(len(rows[0]))]
    out = []
    for n, row in enumerate(rows):
        out.append("  ".join(cell.ljust(w) if c == 0 else cell.rjust(w)
                             for c, (cell, w) in enumerate(zip(row, widths))))
        if n == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out) + "\n"


def run_benchmark(matrix, labels: LabelMap, cfg: EvalConfig = EvalConfig(), method: str = "BinaryNE") -> EvalReport:
    """Query every labeled node against ``matrix`` and aggregate precision@K / MAP@K.

    ``matrix`` is a CodeMatrix (Hamming search) or dense embeddings (Euclidean).
    """
    if len(labels) == 0:
        raise ValueError("no labeled nodes to evaluate")
    cfg.check(labels)
    queries = labels.labeled
    kmax = max(cfg.ks)
    neighbors, _, seconds = batch_top_k(matrix, queries, kmax, exclude_self=cfg.exclude_query)

    qcls = labels.labels[queries]
    rel = labels.labels[neighbors] == qcls[:, None]
    hits = np.cumsum(rel, axis=1)
    prec_at = hits / np.arange(1, kmax + 1)
    sizes = labels.class_sizes()[qcls] - (1 if cfg.exclude_query else 0)
    zero = sizes == 0
    if zero.any():
        log.warning("%d queries have no other node in their class; their AP counts as 0", int(zero.sum()))
    ap_terms = np.cumsum(np.where(rel, prec_at, 0.0), axis=1)

    precision, mean_ap, per_p, per_ap = {}, {}, {}, {}
    for k in cfg.ks:
        p = prec_at[:, k - 1]
        ap = np.where(zero, 0.0, ap_terms[:, k - 1] / np.maximum(sizes, 1))
        per_p[k], per_ap[k] = p, ap
        precision[k] = float(p.mean())
        mean_ap[k] = map_at_k(ap)

    if isinstance(matrix, CodeMatrix):
        memory = matrix.payload_bytes
    else:
        memory = int(np.asarray(matrix).shape[0] * np.asarray(matrix).shape[1] * 8)
    return EvalReport(method=method, ks=tuple(cfg.ks), precision=precision, map=mean_ap,
                      query_ms=1000.0 * seconds / queries.size, memory_bytes=memory,
                      queries=int(queries.size), zero_denominator=int(zero.sum()),
                      per_query_precision=per_p, per_query_ap=per_ap)


def feature_codes(attrs: AttributeMatrix) -> CodeMatrix:
    """Raw-feature baseline: bit j of node i is set iff X[i, j] > 0."""
    if attrs.attr_count == 0:
        raise ValueError("attribute matrix has no columns")
    return CodeMatrix.from_bits(attrs.rows.toarray() > 0)
