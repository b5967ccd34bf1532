"""Bipartite k-nearest-neighbor (GEM) nominal baselines.

The offline phase splits a nominal dataset into a reference set S1 and an
evaluation set S2, scores every S2 point by the sum of its k smallest
Euclidean distances into S1, and keeps those scores sorted.  Online points
are scored the same way against the frozen S1, so no neighbor graph ever
needs recomputing once the baseline is built.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .util import as_points, as_vector, frozen

# PRNG identity recorded alongside baselines so partitions stay reproducible
# across builds (numpy pins the PCG64 stream for a given seed).
RNG_ALGORITHM = "numpy-default-rng-pcg64"

# Cap on the (block, N1, p) scratch tensor used for batched distance work.
_BLOCK_BYTES = 64 * 1024 * 1024


def partition_nominal(data, n1: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Uniformly split nominal data into (s1, s2) with |s1| = n1, without replacement."""
    pts = as_points(data)
    n = pts.shape[0]
    if not 1 <= n1 < n:
        raise ValueError(f"n1 must satisfy 1 <= n1 < {n}, got {n1}")
    perm = np.random.default_rng(seed).permutation(n)
    return pts[perm[:n1]].copy(), pts[perm[n1:]].copy()


def _knn_sum_many(points: np.ndarray, s1: np.ndarray, k: int) -> np.ndarray:
    """Sum of the k smallest Euclidean distances from each row of points into s1.

    Exact brute force, blocked so scratch memory stays bounded.  The selected
    k distances are summed in ascending order, which makes the result
    bit-identical to a full sort over all |s1| distances.
    """
    n1, p = s1.shape
    out = np.empty(points.shape[0], dtype=np.float64)
    block = max(1, _BLOCK_BYTES // (n1 * p * 8))
    for start in range(0, points.shape[0], block):
        chunk = points[start : start + block]
        diff = chunk[:, None, :] - s1[None, :, :]
        np.multiply(diff, diff, out=diff)
        dists = np.sqrt(diff.sum(axis=-1))
        if k < n1:
            smallest = np.partition(dists, k - 1, axis=1)[:, :k]
        else:
            smallest = dists
        smallest.sort(axis=1)
        out[start : start + block] = smallest.sum(axis=1)
    return out


def knn_sum_distance(x, s1, k: int) -> float:
    """Sum of Euclidean distances from x to its k nearest neighbors in s1."""
    ref = as_points(s1, "s1")
    q = as_vector(x, ref.shape[1])
    if not 1 <= k <= ref.shape[0]:
        raise ValueError(f"k must satisfy 1 <= k <= |s1| = {ref.shape[0]}, got {k}")
    return float(_knn_sum_many(q[None, :], ref, k)[0])


@dataclass(frozen=True)
class GemBaseline:
    """Immutable GEM reference: S1 points plus sorted nominal kNN-sum statistics.

    Safe to share read-only across concurrent scorers.
    """

    s1: np.ndarray
    k: int
    sorted_stats: np.ndarray
    seed: int | None = None
    rng_algorithm: str = field(default=RNG_ALGORITHM)

    @property
    def p(self) -> int:
        return int(self.s1.shape[1])

    @property
    def n2(self) -> int:
        return int(self.sorted_stats.shape[0])

    def score(self, x) -> float:
        return gem_score(self, x)


def build_gem_baseline(data, n1: int, k: int, seed) -> GemBaseline:
    """Offline phase: partition nominal data, score S2 against S1, sort the scores."""
    if n1 < k:
        raise ValueError(f"n1 must be >= k, got n1={n1}, k={k}")
    s1, s2 = partition_nominal(data, n1, seed)
    stats = _knn_sum_many(s2, s1, k)
    stats.sort()
    return GemBaseline(s1=frozen(s1), k=int(k), sorted_stats=frozen(stats), seed=seed)


def gem_score(baseline: GemBaseline, x) -> float:
    """kNN-sum summary statistic of a new point against a frozen baseline."""
    q = as_vector(x, baseline.p)
    return float(_knn_sum_many(q[None, :], baseline.s1, baseline.k)[0])
