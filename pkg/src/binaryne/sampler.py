"""Constant-time discrete sampling with Vose alias tables.

Positive node-context pairs and node-attribute pairs are drawn in proportion to
their counts/weights; negatives come from a smoothed unigram noise distribution.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .graph import AttributeMatrix
from .walks import PairCounts

DEFAULT_NOISE_POWER = 0.75


@njit(cache=True, inline="always")
def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


@njit(cache=True, inline="always")
def _split(a):
    c = 134217729.0 * a
    hi = c - (c - a)
    return hi, a - hi


@njit(cache=True, inline="always")
def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


@njit(cache=True)
def _vose(weights):
    # Scaled weights and donor residuals are carried as unevaluated sums hi + lo.
    # A donor that gives away almost all of its mass would otherwise lose its
    # relative precision to cancellation.
    n = weights.size
    total = total_lo = 0.0
    for w in weights:
        total, e = _two_sum(total, w)
        total_lo += e
    total, total_lo = _two_sum(total, total_lo)
    hi = np.empty(n, dtype=np.float64)
    lo = np.empty(n, dtype=np.float64)
    for k in range(n):
        p, e = _two_prod(weights[k], float(n))
        q1 = p / total
        r1, r2 = _two_prod(q1, total)
        q2 = ((p - r1) - r2 + e - q1 * total_lo) / total
        hi[k], lo[k] = _two_sum(q1, q2)
    prob = np.ones(n, dtype=np.float64)
    alias = np.arange(n)
    small = np.empty(n, dtype=np.int64)
    large = np.empty(n, dtype=np.int64)
    ns = nl = 0
    for k in range(n):
        if hi[k] < 1.0:
            small[ns] = k
            ns += 1
        else:
            large[nl] = k
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        g = large[nl - 1]
        ps = hi[s] + lo[s]
        prob[s] = ps
        alias[s] = g
        # g keeps (g + ps) - 1, and ps is exactly what s keeps, so the mass moved is 1 - ps
        a, ea = _two_sum(hi[g], ps)
        b, eb = _two_sum(a, -1.0)
        hi[g], lo[g] = _two_sum(b, lo[g] + ea + eb)
        if hi[g] + lo[g] < 1.0:
            nl -= 1
            small[ns] = g
            ns += 1
    # leftovers are 1 up to rounding
    return prob, alias


@dataclass(frozen=True, eq=False)
class AliasTable:
    prob: np.ndarray
    alias: np.ndarray

    @property
    def n(self) -> int:
        return self.prob.size

    def probabilities(self) -> np.ndarray:
        """Exact category probabilities implied by the table."""
        routed = np.bincount(self.alias, weights=1.0 - self.prob, minlength=self.n)
        return (self.prob + routed) / self.n

    def sample(self, rng: np.random.Generator, size=None):
        k = rng.integers(self.n, size=size)
        u = rng.random(size=size)
        return np.where(u < self.prob[k], k, self.alias[k])


def build_alias(weights) -> AliasTable:
    """O(n) alias table for ``weights`` (non-negative, not all zero)."""
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.size == 0:
        raise ValueError("cannot build an alias table over zero categories")
    if not np.all(np.isfinite(w)) or (w < 0).any():
        raise ValueError("weights must be finite and non-negative")
    if not (w > 0).any():
        raise ValueError("at least one weight must be positive")
    prob, alias = _vose(w)
    return AliasTable(prob=prob, alias=alias)


@dataclass(frozen=True, eq=False)
class NoiseDistribution:
    """Negative-sampling distribution: base frequencies raised to ``power``."""

    table: AliasTable
    power: float
    frequencies: np.ndarray

    @classmethod
    def from_frequencies(cls, frequencies, power: float = DEFAULT_NOISE_POWER):
        freqs = np.asarray(frequencies, dtype=np.float64)
        # zero-frequency categories are never sampleable, whatever the power
        weights = np.where(freqs > 0, np.power(freqs, power, where=freqs > 0), 0.0)
        return cls(table=build_alias(weights), power=power, frequencies=freqs)

    @property
    def sampleable(self) -> int:
        return int((self.frequencies > 0).sum())

    def check_exclusion(self, exclude: int) -> None:
        if self.sampleable == 1 and self.frequencies[exclude] > 0:
            raise ValueError(f"noise distribution has a single category ({exclude}) equal to the excluded target")


def node_noise(counts: PairCounts, power: float = DEFAULT_NOISE_POWER) -> NoiseDistribution:
    return NoiseDistribution.from_frequencies(counts.center_frequencies(), power)


def attribute_noise(attrs: AttributeMatrix, power: float = DEFAULT_NOISE_POWER) -> NoiseDistribution:
    return NoiseDistribution.from_frequencies(attrs.column_sums(), power)


def pair_table(counts: PairCounts) -> AliasTable:
    if counts.size == 0:
        raise ValueError("empty pair counts")
    return build_alias(counts.counts)


def attribute_table(attrs: AttributeMatrix) -> AliasTable:
    if attrs.nnz == 0:
        raise ValueError("empty attribute matrix")
    return build_alias(attrs.rows.data)


def sample_pair(counts: PairCounts, table: AliasTable, rng: np.random.Generator) -> tuple[int, int]:
    if counts.size == 0:
        raise ValueError("empty pair counts")
    k = int(table.sample(rng))
    return int(counts.centers[k]), int(counts.contexts[k])


def sample_attr_pair(attrs: AttributeMatrix, table: AliasTable, rng: np.random.Generator) -> tuple[int, int]:
    if attrs.nnz == 0:
        raise ValueError("empty attribute matrix")
    k = int(table.sample(rng))
    node = int(np.searchsorted(attrs.rows.indptr, k, side="right") - 1)
    return node, int(attrs.rows.indices[k])


def draw_negatives(noise: NoiseDistribution, k: int, exclude: int, rng: np.random.Generator) -> np.ndarray:
    """``k`` independent noise draws, each redrawn while it equals ``exclude``."""
    if k < 1:
        raise ValueError("need at least one negative")
    noise.check_exclusion(exclude)
    out = noise.table.sample(rng, size=k)
    bad = out == exclude
    while bad.any():
        out[bad] = noise.table.sample(rng, size=int(bad.sum()))
        bad = out == exclude
    return out
