"""Exhaustive top-K search: Hamming over packed codes, squared Euclidean over dense rows.

Both scorers stream the matrix once and keep a bounded max-heap of size K.
Ties are broken by ascending node index.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._jit import popcount64
from .codes import CodeMatrix


@dataclass(frozen=True, eq=False)
class RankedResult:
    nodes: np.ndarray
    distances: np.ndarray
    elapsed: float = 0.0

    def __len__(self) -> int:
        return self.nodes.size

    def entries(self) -> list[tuple[int, int | float]]:
        return [(int(n), d.item()) for n, d in zip(self.nodes, self.distances)]


@njit(inline="always", cache=True)
def _worse(da, ia, db, ib):
    return da > db or (da == db and ia > ib)


@njit(inline="always", cache=True)
def _sift_down(hd, hi, size, pos):
    while True:
        left = 2 * pos + 1
        if left >= size:
            return
        big = left
        right = left + 1
        if right < size and _worse(hd[right], hi[right], hd[left], hi[left]):
            big = right
        if _worse(hd[big], hi[big], hd[pos], hi[pos]):
            hd[pos], hd[big] = hd[big], hd[pos]
            hi[pos], hi[big] = hi[big], hi[pos]
            pos = big
        else:
            return


@njit(inline="always", cache=True)
def _push(hd, hi, size, d, i):
    pos = size
    hd[pos] = d
    hi[pos] = i
    while pos > 0:
        parent = (pos - 1) // 2
        if _worse(hd[pos], hi[pos], hd[parent], hi[parent]):
            hd[pos], hd[parent] = hd[parent], hd[pos]
            hi[pos], hi[parent] = hi[parent], hi[pos]
            pos = parent
        else:
            return


@njit(cache=True)
def _offer(hd, hi, size, k, d, i):
    if size < k:
        _push(hd, hi, size, d, i)
        return size + 1
    if _worse(hd[0], hi[0], d, i):
        hd[0] = d
        hi[0] = i
        _sift_down(hd, hi, size, 0)
    return size


@njit(cache=True)
def _finish(hd, hi, size, out_d, out_i):
    # pop the max repeatedly, filling from the back
    while size > 0:
        size -= 1
        out_d[size] = hd[0]
        out_i[size] = hi[0]
        hd[0] = hd[size]
        hi[0] = hi[size]
        _sift_down(hd, hi, size, 0)


@njit(inline="always", cache=True)
def _key_sift_down(heap, size, pos):
    # slots past ``size`` hold -1, below every key, so the right child needs no
    # bounds check and the larger-child pick compiles without a branch
    key = heap[pos]
    child = 2 * pos + 1
    while child < size:
        child += np.int64(heap[child + 1] > heap[child])
        if heap[child] <= key:
            break
        heap[pos] = heap[child]
        pos = child
        child = 2 * pos + 1
    heap[pos] = key


@njit(cache=True)
def _hamming_topk(data, q, k, skip, out_d, out_i):
    # A Hamming distance fits in 32 bits, so (distance, index) packs into one
    # int64 key whose integer order is exactly the ranking order, tie rule included.
    heap = np.full(2 * k + 2, -1, dtype=np.int64)
    size = 0
    words = data.shape[1]
    for i in range(data.shape[0]):
        if i == skip:
            continue
        dist = 0
        for w in range(words):
            dist += popcount64(data[i, w] ^ q[w])
        key = (np.int64(dist) << 32) | i
        if size < k:
            # sift up
            pos = size
            size += 1
            while pos > 0:
                parent = (pos - 1) >> 1
                if heap[parent] >= key:
                    break
                heap[pos] = heap[parent]
                pos = parent
            heap[pos] = key
        elif key < heap[0]:
            heap[0] = key
            _key_sift_down(heap, size, 0)
    while size > 0:
        size -= 1
        top = heap[0]
        out_d[size] = top >> 32
        out_i[size] = top & 0xFFFFFFFF
        heap[0] = heap[size]
        heap[size] = -1
        _key_sift_down(heap, size, 0)


@njit(cache=True)
def _hamming_topk_batch(data, queries, skips, k, out_d, out_i):
    for m in range(queries.shape[0]):
        _hamming_topk(data, queries[m], k, skips[m], out_d[m], out_i[m])


@njit(cache=True)
def _euclid_topk(emb, q, k, skip, out_d, out_i):
    hd = np.empty(k, dtype=np.float64)
    hi = np.empty(k, dtype=np.int64)
    size = 0
    dim = emb.shape[1]
    for i in range(emb.shape[0]):
        if i == skip:
            continue
        dist = 0.0
        for r in range(dim):
            diff = emb[i, r] - q[r]
            dist += diff * diff
        # indices arrive in ascending order, so a tie with the current worst always loses
        if size == k and dist >= hd[0]:
            continue
        size = _offer(hd, hi, size, k, dist, i)
    _finish(hd, hi, size, out_d, out_i)


@njit(cache=True)
def _euclid_topk_batch(emb, queries, skips, k, out_d, out_i):
    for m in range(queries.shape[0]):
        _euclid_topk(emb, queries[m], k, skips[m], out_d[m], out_i[m])


def hamming(a, b) -> int:
    """Number of differing bits between two packed codes (canonical zero tails)."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    if a.shape != b.shape:
        raise ValueError("codes must have equal word counts")
    return int(np.bitwise_count(a ^ b).sum())


def _resolve(query, matrix, exclude_self):
    """(query vector, index to skip)."""
    if np.isscalar(query) or (isinstance(query, np.ndarray) and query.ndim == 0):
        node = int(query)
        if not 0 <= node < matrix.shape[0]:
            raise IndexError(f"query node {node} out of range")
        return matrix[node], node if exclude_self else -1
    return np.asarray(query, dtype=matrix.dtype), -1


def _check_k(k, n, skip):
    limit = n - (1 if skip >= 0 else 0)
    if not 1 <= k <= limit:
        raise ValueError(f"K={k} outside [1, {limit}]")


def top_k(codes: CodeMatrix, query, k: int, exclude_self: bool = True) -> RankedResult:
    """K nearest codes to ``query`` (a node index or a packed code) by Hamming distance."""
    q, skip = _resolve(query, codes.data, exclude_self)
    if q.shape != (codes.words_per_code,):
        raise ValueError("query code has the wrong number of words")
    _check_k(k, codes.node_count, skip)
    out_d = np.empty(k, dtype=np.int64)
    out_i = np.empty(k, dtype=np.int64)
    started = time.perf_counter()
    _hamming_topk(codes.data, q, k, skip, out_d, out_i)
    return RankedResult(out_i, out_d, time.perf_counter() - started)


def top_k_euclidean(embeddings, query, k: int, exclude_self: bool = True) -> RankedResult:
    """K nearest rows by squared Euclidean distance; same tie rule as :func:`top_k`."""
    emb = np.ascontiguousarray(embeddings, dtype=np.float64)
    q, skip = _resolve(query, emb, exclude_self)
    _check_k(k, emb.shape[0], skip)
    out_d = np.empty(k, dtype=np.float64)
    out_i = np.empty(k, dtype=np.int64)
    started = time.perf_counter()
    _euclid_topk(emb, q, k, skip, out_d, out_i)
    return RankedResult(out_i, out_d, time.perf_counter() - started)


def batch_top_k(matrix, nodes, k: int, exclude_self: bool = True):
    """Top-K for many stored nodes at once.

    ``matrix`` is a CodeMatrix (Hamming) or a dense array (Euclidean). Returns
    ``(neighbors, distances, seconds)`` with per-query rows.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    if isinstance(matrix, CodeMatrix):
        data, kernel, dtype = matrix.data, _hamming_topk_batch, np.int64
    else:
        data, kernel, dtype = np.ascontiguousarray(matrix, dtype=np.float64), _euclid_topk_batch, np.float64
    if nodes.size and (nodes.min() < 0 or nodes.max() >= data.shape[0]):
        raise IndexError("query node out of range")
    _check_k(k, data.shape[0], 0 if exclude_self else -1)
    skips = nodes.copy() if exclude_self else np.full(nodes.size, -1, dtype=np.int64)
    queries = np.ascontiguousarray(data[nodes])
    out_d = np.empty((nodes.size, k), dtype=dtype)
    out_i = np.empty((nodes.size, k), dtype=np.int64)
    started = time.perf_counter()
    kernel(data, queries, skips, k, out_d, out_i)
    return out_i, out_d, time.perf_counter() - started
