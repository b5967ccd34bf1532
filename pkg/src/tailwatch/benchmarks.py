"""Benchmark sequential change detectors sharing one stopping-time interface.

Every detector exposes ``step(x) -> float | None`` (the decision statistic
after ingesting one observation, or None while a window is still warming
up), a step counter ``t``, and ``stopped_at``, set the first time the
statistic reaches the threshold ``h``.  Stepping a stopped detector raises.

NpCusum and Odit consume scalar summary statistics; wrap them in ScoreFeed
to drive them with raw points through a baseline scorer.  The other three
consume raw points directly.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .util import as_points, as_vector


class _SequentialDetector:
    """Threshold-stopping state machine base."""

    def __init__(self, h: float):
        self.h = float(h)
        self.t = 0
        self.stopped_at: int | None = None

    def _ingest(self, x):
        raise NotImplementedError

    def step(self, x):
        if self.stopped_at is not None:
            raise RuntimeError(f"detector already stopped at step {self.stopped_at}")
        self.t += 1
        stat = self._ingest(x)
        if stat is not None and stat >= self.h:
            self.stopped_at = self.t
        return stat


class NpCusum(_SequentialDetector):
    """One-sided CUSUM of a summary statistic against its nominal mean."""

    def __init__(self, mean_baseline: float, h: float):
        super().__init__(h)
        self.mean_baseline = float(mean_baseline)
        self.g = 0.0

    def _ingest(self, stat):
        self.g = max(0.0, self.g + float(stat) - self.mean_baseline)
        return self.g


def odit_threshold(sorted_stats, alpha: float) -> float:
    """K-th largest nominal statistic with K = ceil(alpha * N2)."""
    stats = np.asarray(sorted_stats, dtype=np.float64)
    if stats.ndim != 1 or stats.shape[0] == 0:
        raise ValueError("sorted_stats must be a nonempty 1-D array")
    n2 = stats.shape[0]
    k = math.ceil(alpha * n2)
    if not 1 <= k <= n2:
        raise ValueError(f"ceil(alpha * N2) = {k} out of range for N2 = {n2}")
    return float(stats[n2 - k])


class Odit(_SequentialDetector):
    """CUSUM against the K-th largest nominal statistic instead of the mean."""

    def __init__(self, sorted_stats, alpha: float, h: float):
        super().__init__(h)
        self.K = math.ceil(alpha * len(np.asarray(sorted_stats)))
        self.threshold_distance = odit_threshold(sorted_stats, alpha)
        self.g = 0.0

    def _ingest(self, stat):
        self.g = max(0.0, self.g + float(stat) - self.threshold_distance)
        return self.g


class ScoreFeed:
    """Drives a statistic-level detector with baseline scores of raw points."""

    def __init__(self, baseline, inner: _SequentialDetector):
        self.baseline = baseline
        self.inner = inner

    @property
    def t(self) -> int:
        return self.inner.t

    @property
    def stopped_at(self) -> int | None:
        return self.inner.stopped_at

    @property
    def h(self) -> float:
        return self.inner.h

    def step(self, x):
        return self.inner.step(self.baseline.score(x))


# --------------------------------------------------------------------------
# Two-window KL divergence test
# --------------------------------------------------------------------------

_DIST_FLOOR = 1e-12  # keeps log ratios finite when points coincide


def _cross_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d2 = (a * a).sum(axis=1)[:, None] - 2.0 * (a @ b.T) + (b * b).sum(axis=1)[None, :]
    np.maximum(d2, 0.0, out=d2)
    return d2


def _kth_nn_distance(from_pts: np.ndarray, to_pts: np.ndarray, k: int, exclude_self: bool) -> np.ndarray:
    """Distance from each row of from_pts to its k-th NN among to_pts."""
    d2 = _cross_sq_dists(from_pts, to_pts)
    if exclude_self:
        np.fill_diagonal(d2, np.inf)
    kth = np.partition(d2, k - 1, axis=1)[:, k - 1]
    return np.sqrt(kth)


def itmcd_kl_estimate(window_m, window_n, k: int) -> float:
    """kNN estimate of the KL divergence from window_m's law to window_n's.

    Self-distances exclude the query point; all distances are floored at
    1e-12 before entering the log ratio.
    """
    wm = as_points(window_m, "window_m")
    wn = as_points(window_n, "window_n")
    if wm.shape[1] != wn.shape[1]:
        raise ValueError("windows must share the point dimension")
    if len(wm) < k + 1 or len(wn) < k + 1:
        raise ValueError(f"both windows need at least k+1 = {k + 1} points")
    p = wm.shape[1]
    e_cross = np.maximum(_kth_nn_distance(wm, wn, k, exclude_self=False), _DIST_FLOOR)
    e_self = np.maximum(_kth_nn_distance(wm, wm, k, exclude_self=True), _DIST_FLOOR)
    return float(
        math.log(len(wn) / (len(wm) - 1.0)) + (p / len(wm)) * np.log(e_cross / e_self).sum()
    )


class Itmcd(_SequentialDetector):
    """Symmetric two-window kNN KL statistic over a sliding buffer.

    The recent window (size w1) is compared against the preceding window
    (size w2); the statistic is the sum of the two directed estimates.
    """

    def __init__(self, w1: int = 20, w2: int = 100, k: int = 4, h: float = math.inf):
        super().__init__(h)
        if min(w1, w2) < k + 1:
            raise ValueError(f"window sizes must be at least k+1 = {k + 1}")
        self.w1, self.w2, self.k = int(w1), int(w2), int(k)
        self._buf: deque = deque(maxlen=w1 + w2)

    def _ingest(self, x):
        self._buf.append(np.asarray(x, dtype=np.float64))
        if len(self._buf) < self.w1 + self.w2:
            return None
        pts = np.asarray(self._buf)
        older, recent = pts[: self.w2], pts[self.w2 :]
        return itmcd_kl_estimate(recent, older, self.k) + itmcd_kl_estimate(
            older, recent, self.k
        )


# --------------------------------------------------------------------------
# kNN-graph two-sample test over a sliding window
# --------------------------------------------------------------------------


def knn_graph(points, k: int) -> np.ndarray:
    """Directed kNN adjacency (self excluded); ties break by ascending index."""
    pts = as_points(points, "points")
    n = pts.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n = {n}, got k = {k}")
    d2 = _cross_sq_dists(pts, pts)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    adj = np.zeros((n, n), dtype=np.float64)
    np.put_along_axis(adj, order, 1.0, axis=1)
    return adj


def _crossing_counts(sym: np.ndarray, ranks: np.ndarray, splits: np.ndarray) -> np.ndarray:
    """Edge weight crossing each candidate split, for each labeling.

    sym is the symmetrized adjacency, ranks an (n_labelings, W) array of
    1-based positions, splits the candidate cut positions.  Uses
    R = 2 * deg . u - 2 * u^T sym u with u the left-group indicator.
    """
    u = (ranks[:, :, None] <= splits[None, None, :]).astype(np.float64)
    deg = sym.sum(axis=1)
    lin = np.einsum("w,pws->ps", deg, u)
    quad = np.einsum("pws,pws->ps", u, np.matmul(sym[None, :, :], u))
    return 2.0 * lin - 2.0 * quad


def nn_online_statistic(window, k: int, n0: int, n1: int, permutations: int, rng) -> float:
    """Max standardized count of kNN edges crossing a candidate time split.

    The observed count uses the actual time order; its null mean and
    variance are estimated over uniformly random relabelings of the window.
    Splits range over left-group sizes W-n1 .. W-n0.  Fewer crossings than
    expected yield a positive statistic; degenerate (zero-variance) splits
    contribute 0.
    """
    pts = as_points(window, "window")
    w = pts.shape[0]
    if not (1 <= n0 <= n1 < w):
        raise ValueError(f"need 1 <= n0 <= n1 < W, got n0={n0}, n1={n1}, W={w}")
    if not 1 <= k < w:
        raise ValueError(f"need 1 <= k < W, got k={k}")
    if permutations < 2:
        raise ValueError("need at least 2 permutations to estimate a variance")
    sym = knn_graph(pts, k)
    sym = sym + sym.T
    splits = np.arange(w - n1, w - n0 + 1)

    identity = np.arange(1, w + 1)[None, :]
    r_obs = _crossing_counts(sym, identity, splits)[0]

    perm_ranks = np.tile(identity, (permutations, 1))
    perm_ranks = rng.permuted(perm_ranks, axis=1)
    r_perm = _crossing_counts(sym, perm_ranks, splits)
    mean = r_perm.mean(axis=0)
    sd = r_perm.std(axis=0, ddof=1)
    z = np.where(sd > 0.0, (mean - r_obs) / np.where(sd > 0.0, sd, 1.0), 0.0)
    return float(z.max())


class NnOnline(_SequentialDetector):
    """Sliding-window kNN-graph two-sample test with permutation calibration."""

    def __init__(
        self,
        window: int = 50,
        k: int = 10,
        n0: int = 10,
        n1: int = 40,
        h: float = math.inf,
        permutations: int = 200,
        seed=0,
    ):
        super().__init__(h)
        if window < n1 + 1:
            raise ValueError(f"window must be >= n1 + 1 = {n1 + 1}, got {window}")
        self.window, self.k, self.n0, self.n1 = int(window), int(k), int(n0), int(n1)
        self.permutations = int(permutations)
        self.rng = np.random.default_rng(seed)
        self._buf: deque = deque(maxlen=window)

    def _ingest(self, x):
        self._buf.append(np.asarray(x, dtype=np.float64))
        if len(self._buf) < self.window:
            return None
        return nn_online_statistic(
            np.asarray(self._buf), self.k, self.n0, self.n1, self.permutations, self.rng
        )


# --------------------------------------------------------------------------
# Equiprobable-partition chi-squared test
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class QuantTreePartition:
    """Axis-aligned recursive-quantile partition into equal-mass bins.

    Nodes are ('split', dim, threshold, left, right) tuples ending in
    ('leaf', bin_id); points with coordinate <= threshold go left.  Outer
    bins are unbounded, so every point of R^p lands in exactly one bin.
    """

    tree: tuple
    n_bins: int
    p: int
    seed: int | None = None

    @property
    def probabilities(self) -> np.ndarray:
        return np.full(self.n_bins, 1.0 / self.n_bins)

    def assign(self, x) -> int:
        q = as_vector(x, self.p)
        node = self.tree
        while node[0] == "split":
            _, dim, thr, left, right = node
            node = left if q[dim] <= thr else right
        return node[1]

    def assign_many(self, points) -> np.ndarray:
        pts = as_points(points, "points")
        if pts.shape[1] != self.p:
            raise ValueError(f"points dimension {pts.shape[1]} != partition dimension {self.p}")
        out = np.empty(pts.shape[0], dtype=np.int64)
        _assign_recursive(self.tree, pts, np.arange(pts.shape[0]), out)
        return out


def _assign_recursive(node, pts, idx, out):
    if node[0] == "leaf":
        out[idx] = node[1]
        return
    _, dim, thr, left, right = node
    mask = pts[idx, dim] <= thr
    _assign_recursive(left, pts, idx[mask], out)
    _assign_recursive(right, pts, idx[~mask], out)


def quanttree_build(nominal, n_bins: int, seed) -> QuantTreePartition:
    """Partition the space into n_bins axis-aligned cells of equal training mass.

    Each internal node splits a random coordinate at the empirical quantile
    that routes the proportional share of training points (and target bins)
    to each side.
    """
    pts = as_points(nominal, "nominal")
    if n_bins < 1:
        raise ValueError(f"n_bins must be >= 1, got {n_bins}")
    if pts.shape[0] < n_bins:
        raise ValueError(f"need at least {n_bins} training points, got {pts.shape[0]}")
    rng = np.random.default_rng(seed)
    counter = iter(range(n_bins))

    def grow(idx: np.ndarray, bins: int):
        if bins == 1:
            return ("leaf", next(counter))
        left_bins = bins // 2
        dim = int(rng.integers(pts.shape[1]))
        values = pts[idx, dim]
        order = np.argsort(values, kind="stable")
        n_left = int(round(len(idx) * left_bins / bins))
        n_left = min(max(n_left, left_bins), len(idx) - (bins - left_bins))
        sorted_vals = values[order]
        threshold = 0.5 * (sorted_vals[n_left - 1] + sorted_vals[n_left])
        return (
            "split",
            dim,
            float(threshold),
            grow(idx[order[:n_left]], left_bins),
            grow(idx[order[n_left:]], bins - left_bins),
        )

    tree = grow(np.arange(pts.shape[0]), int(n_bins))
    return QuantTreePartition(tree=tree, n_bins=int(n_bins), p=pts.shape[1], seed=seed)


def chi_squared_statistic(counts, pi, window: int) -> float:
    """Pearson statistic of observed bin counts against expected window * pi."""
    y = np.asarray(counts, dtype=np.float64)
    probs = np.asarray(pi, dtype=np.float64)
    if y.shape != probs.shape:
        raise ValueError("counts and pi must have the same length")
    if np.any(probs <= 0.0) or abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError("pi must be positive and sum to 1")
    if int(round(y.sum())) != window:
        raise ValueError(f"counts sum to {y.sum()}, expected {window}")
    expected = window * probs
    return float(((y - expected) ** 2 / expected).sum())


class QuantTree(_SequentialDetector):
    """Sliding-window chi-squared test over a fixed equiprobable partition."""

    def __init__(self, partition: QuantTreePartition, window: int = 256, h: float = math.inf):
        super().__init__(h)
        self.partition = partition
        self.window = int(window)
        self._bins: deque = deque(maxlen=window)
        self._counts = np.zeros(partition.n_bins, dtype=np.int64)

    def _ingest(self, x):
        b = self.partition.assign(x)
        if len(self._bins) == self.window:
            self._counts[self._bins[0]] -= 1
        self._bins.append(b)
        self._counts[b] += 1
        if len(self._bins) < self.window:
            return None
        return chi_squared_statistic(self._counts, self.partition.probabilities, self.window)
