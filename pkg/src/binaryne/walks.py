"""Truncated uniform random walks and windowed context-pair counting."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numba
import numpy as np
from numba import njit, prange

from ._jit import below, new_stream
from .graph import Graph

log = logging.getLogger(__name__)

# walks per counting chunk; bounds the transient key buffer to ~chunk * 2 * t * L
_CHUNK_WALKS = 4096


@dataclass(frozen=True)
class WalkConfig:
    walk_length: int = 100
    walks_per_node: int = 40
    window: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.walk_length < 1:
            raise ValueError("walk_length must be >= 1")
        if self.walks_per_node < 1:
            raise ValueError("walks_per_node must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.window >= self.walk_length:
            log.warning("window %d >= walk length %d; windows are truncated at walk ends",
                        self.window, self.walk_length)


@dataclass(frozen=True, eq=False)
class WalkSet:
    """Walks stored row-wise; ``steps[w, :lengths[w]]`` is walk ``w``, the rest is -1."""

    steps: np.ndarray
    lengths: np.ndarray

    def __len__(self) -> int:
        return self.lengths.size

    def __iter__(self):
        for row, n in zip(self.steps, self.lengths):
            yield row[:n]

    def dump(self, path, ids) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for walk in self:
                fh.write(" ".join(ids[v] for v in walk))
                fh.write("\n")


@njit(parallel=True, cache=True)
def _walk_kernel(indptr, indices, starts, rounds, length, seed, steps, lengths):
    for w in prange(starts.size):
        state = new_stream(seed, starts[w], rounds[w])
        cur = starts[w]
        steps[w, 0] = cur
        n = 1
        while n < length:
            lo = indptr[cur]
            deg = indptr[cur + 1] - lo
            if deg == 0:
                break
            cur = indices[lo + below(state, deg)]
            steps[w, n] = cur
            n += 1
        lengths[w] = n


def _walk_ids(node_count: int, lo: int, hi: int):
    # walk id = round * |V| + start node
    ids = np.arange(lo, hi, dtype=np.int64)
    return ids % node_count, ids // node_count


def _walk_range(graph: Graph, cfg: WalkConfig, lo: int, hi: int) -> WalkSet:
    starts, rounds = _walk_ids(graph.node_count, lo, hi)
    steps = np.full((hi - lo, cfg.walk_length), -1, dtype=np.int32)
    lengths = np.empty(hi - lo, dtype=np.int64)
    _walk_kernel(graph.indptr, graph.indices, starts, rounds, cfg.walk_length,
                 np.uint64(cfg.seed & 0xFFFFFFFFFFFFFFFF), steps, lengths)
    return WalkSet(steps=steps, lengths=lengths)


def generate_walks(graph: Graph, cfg: WalkConfig) -> WalkSet:
    """``walks_per_node`` walks from every node, ordered round-major."""
    total = graph.node_count * cfg.walks_per_node
    walks = _walk_range(graph, cfg, 0, total)
    log.info("generated %d walks (mean length %.1f)", len(walks), walks.lengths.mean() if total else 0.0)
    return walks


@dataclass(frozen=True, eq=False)
class PairCounts:
    """Sparse n(center, context), sorted by (center, context), no diagonal."""

    centers: np.ndarray
    contexts: np.ndarray
    counts: np.ndarray
    node_count: int

    @property
    def size(self) -> int:
        return self.counts.size

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def as_dict(self) -> dict[tuple[int, int], int]:
        return {(int(i), int(j)): int(c) for i, j, c in zip(self.centers, self.contexts, self.counts)}

    def center_frequencies(self) -> np.ndarray:
        return np.bincount(self.centers, weights=self.counts, minlength=self.node_count)

    def save(self, path) -> None:
        np.savetxt(path, np.column_stack([self.centers, self.contexts, self.counts]), fmt="%d",
                   delimiter=" ", header=f"nodes {self.node_count}")

    @classmethod
    def load(cls, path, node_count: int) -> "PairCounts":
        with warnings.catch_warnings():
            # an empty pair file is legitimate (walk length 1); don't let numpy warn about it
            warnings.filterwarnings("ignore", "loadtxt: input contained no data")
            data = np.loadtxt(path, dtype=np.int64, ndmin=2, comments="#")
        if data.size == 0:
            data = np.empty((0, 3), dtype=np.int64)
        if data.shape[1] != 3:
            raise ValueError(f"{path}: expected 'i j count' rows")
        i, j, c = data.T
        if data.shape[0] and (min(i.min(), j.min()) < 0 or max(i.max(), j.max()) >= node_count):
            raise ValueError(f"{path}: node index out of range for {node_count} nodes")
        if (c <= 0).any():
            raise ValueError(f"{path}: counts must be positive")
        keys, counts = _merge_keys(i * node_count + j, c)
        return cls._from_keys(keys, counts, node_count)

    @classmethod
    def _from_keys(cls, keys, counts, node_count):
        return cls(
            centers=(keys // node_count).astype(np.int32),
            contexts=(keys % node_count).astype(np.int32),
            counts=counts.astype(np.int64),
            node_count=node_count,
        )


@njit(cache=True)
def _window_keys(steps, lengths, window, node_count):
    total = 0
    for w in range(lengths.size):
        n = lengths[w]
        for i in range(n):
            total += min(window, n - 1 - i)
    keys = np.empty(2 * total, dtype=np.int64)
    m = 0
    for w in range(lengths.size):
        n = lengths[w]
        for i in range(n):
            a = np.int64(steps[w, i])
            for j in range(i + 1, min(i + window, n - 1) + 1):
                b = np.int64(steps[w, j])
                if a != b:
                    keys[m] = a * node_count + b
                    keys[m + 1] = b * node_count + a
                    m += 2
    return keys[:m]


@njit(cache=True)
def _run_lengths(sorted_keys):
    n = sorted_keys.size
    keys = np.empty(n, dtype=np.int64)
    counts = np.empty(n, dtype=np.int64)
    m = -1
    for k in range(n):
        if m < 0 or sorted_keys[k] != keys[m]:
            m += 1
            keys[m] = sorted_keys[k]
            counts[m] = 0
        counts[m] += 1
    return keys[:m + 1], counts[:m + 1]


@njit(cache=True)
def _merge_sorted(ka, ca, kb, cb):
    keys = np.empty(ka.size + kb.size, dtype=np.int64)
    counts = np.empty(ka.size + kb.size, dtype=np.int64)
    i = j = m = 0
    while i < ka.size or j < kb.size:
        if j >= kb.size or (i < ka.size and ka[i] < kb[j]):
            keys[m] = ka[i]
            counts[m] = ca[i]
            i += 1
        elif i >= ka.size or kb[j] < ka[i]:
            keys[m] = kb[j]
            counts[m] = cb[j]
            j += 1
        else:
            keys[m] = ka[i]
            counts[m] = ca[i] + cb[j]
            i += 1
            j += 1
        m += 1
    return keys[:m], counts[:m]


def _merge_keys(keys, counts):
    order = np.argsort(keys, kind="stable")
    keys, counts = keys[order], counts[order]
    uniq, start = np.unique(keys, return_index=True)
    return uniq, np.add.reduceat(counts, start) if keys.size else counts


class _PairAccumulator:
    def __init__(self, node_count: int, window: int):
        self.node_count = node_count
        self.window = window
        self.keys = np.empty(0, dtype=np.int64)
        self.counts = np.empty(0, dtype=np.int64)

    def add(self, walks: WalkSet) -> None:
        raw = _window_keys(walks.steps, walks.lengths, self.window, self.node_count)
        raw.sort()
        keys, counts = _run_lengths(raw)
        self.keys, self.counts = _merge_sorted(self.keys, self.counts, keys, counts)

    def result(self) -> PairCounts:
        return PairCounts._from_keys(self.keys, self.counts, self.node_count)


def count_context_pairs(walks: WalkSet, window: int, node_count: int | None = None) -> PairCounts:
    """n(a, b) += 1 for every ordered pair of positions 0 < |i - j| <= window in a walk."""
    if window < 1:
        raise ValueError("window must be >= 1")
    if node_count is None:
        node_count = int(walks.steps.max()) + 1 if len(walks) else 0
    acc = _PairAccumulator(node_count, window)
    for lo in range(0, len(walks), _CHUNK_WALKS):
        hi = min(lo + _CHUNK_WALKS, len(walks))
        acc.add(WalkSet(walks.steps[lo:hi], walks.lengths[lo:hi]))
    return acc.result()


def collect_pairs(graph: Graph, cfg: WalkConfig, threads: int = 1) -> PairCounts:
    """Generate walks and count pairs chunk by chunk without keeping all walks in memory.

    Equal to ``count_context_pairs(generate_walks(graph, cfg), cfg.window)``.
    """
    if threads > 1:
        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    total = graph.node_count * cfg.walks_per_node
    acc = _PairAccumulator(graph.node_count, cfg.window)
    for lo in range(0, total, _CHUNK_WALKS):
        acc.add(_walk_range(graph, cfg, lo, min(lo + _CHUNK_WALKS, total)))
    counts = acc.result()
    log.info("%d walks -> %d distinct context pairs, total %d", total, counts.size, counts.total)
    if counts.size == 0:
        log.warning("no context pairs collected (walk length %d)", cfg.walk_length)
    return counts
