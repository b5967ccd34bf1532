"""Principal-subspace nominal baselines scored by residual norm.

The subspace is fit on S1 (sample mean, covariance with 1/N1 normalization,
symmetric eigendecomposition), the retained dimension r is the smallest one
reaching the requested variance fraction (or an explicit override), and the
nominal statistics are the sorted residual norms of S2 against that subspace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gem import GemBaseline, gem_score
from .util import as_points, as_vector, frozen


@dataclass(frozen=True)
class PcaBaseline:
    """Immutable principal-subspace fit plus sorted nominal residual norms."""

    mean: np.ndarray          # (p,) sample mean of S1
    basis: np.ndarray         # (p, r), orthonormal columns spanning the subspace
    eigenvalues: np.ndarray   # (p,) descending, clamped at 0
    r: int
    gamma_achieved: float     # variance fraction actually retained
    sorted_stats: np.ndarray  # (N2,) ascending residual norms

    @property
    def p(self) -> int:
        return int(self.mean.shape[0])

    def score(self, x) -> float:
        return pca_score(self, x)


def select_r(eigenvalues, gamma_min: float) -> int:
    """Smallest r whose leading-eigenvalue fraction reaches gamma_min."""
    evals = np.asarray(eigenvalues, dtype=np.float64)
    if not 0.0 < gamma_min <= 1.0:
        raise ValueError(f"gamma_min must lie in (0, 1], got {gamma_min}")
    cum = np.cumsum(evals)
    total = cum[-1]
    if total <= 0.0:
        # Degenerate spectrum (all points identical): any r retains everything.
        return 1
    frac = cum / total
    frac[-1] = 1.0
    return int(np.searchsorted(frac, gamma_min, side="left")) + 1


def fit_pca_baseline(s1, s2, gamma_min: float | None = None, r: int | None = None) -> PcaBaseline:
    """Fit the principal subspace on s1 and collect sorted residual norms over s2.

    Exactly one of gamma_min (minimum retained variance fraction) or r
    (explicit subspace dimension) must be given.
    """
    if (gamma_min is None) == (r is None):
        raise ValueError("exactly one of gamma_min and r must be given")
    fit_pts = as_points(s1, "s1")
    eval_pts = as_points(s2, "s2")
    n1, p = fit_pts.shape
    if n1 < 2:
        raise ValueError(f"s1 must hold at least 2 points, got {n1}")
    if eval_pts.shape[1] != p:
        raise ValueError(f"s2 dimension {eval_pts.shape[1]} != s1 dimension {p}")

    mean = fit_pts.mean(axis=0)
    centered = fit_pts - mean
    cov = centered.T @ centered / n1
    evals, evecs = np.linalg.eigh(cov)
    evals = np.maximum(evals[::-1], 0.0)
    evecs = evecs[:, ::-1]
    # Sign convention: largest-magnitude entry of each eigenvector is positive,
    # so repeated fits produce identical bases (residuals are sign-invariant).
    flip = evecs[np.abs(evecs).argmax(axis=0), np.arange(p)] < 0
    evecs[:, flip] *= -1.0

    if r is None:
        r = select_r(evals, gamma_min)
    else:
        if not 1 <= r <= p:
            raise ValueError(f"r must satisfy 1 <= r <= {p}, got {r}")
    cum = np.cumsum(evals)
    total = cum[-1]
    gamma_achieved = float(cum[r - 1] / total) if total > 0.0 else 1.0

    basis = evecs[:, :r]
    centered2 = eval_pts - mean
    resid = centered2 - (centered2 @ basis) @ basis.T
    stats = np.linalg.norm(resid, axis=1)
    stats.sort()

    return PcaBaseline(
        mean=frozen(mean),
        basis=frozen(basis),
        eigenvalues=frozen(evals),
        r=int(r),
        gamma_achieved=gamma_achieved,
        sorted_stats=frozen(stats),
    )


def residual(baseline: PcaBaseline, x) -> tuple[np.ndarray, float]:
    """Component of x - mean orthogonal to the principal subspace, and its norm."""
    q = as_vector(x, baseline.p)
    centered = q - baseline.mean
    vec = centered - baseline.basis @ (baseline.basis.T @ centered)
    return vec, float(np.linalg.norm(vec))


def pca_score(baseline: PcaBaseline, x) -> float:
    """Residual-norm summary statistic of a new point."""
    return residual(baseline, x)[1]


def project(baseline: PcaBaseline, x) -> np.ndarray:
    """Coordinates of x in the principal basis (no centering)."""
    q = as_vector(x, baseline.p)
    return baseline.basis.T @ q


@dataclass(frozen=True)
class ProjectedGemBaseline:
    """GEM baseline built in PCA-reduced coordinates.

    Scoring projects the incoming point with the stored basis and evaluates
    the kNN-sum statistic in the reduced space.
    """

    pca: PcaBaseline
    gem: GemBaseline

    def __post_init__(self):
        if self.gem.p != self.pca.r:
            raise ValueError(
                f"GEM dimension {self.gem.p} != projected dimension {self.pca.r}"
            )

    @property
    def p(self) -> int:
        return self.pca.p

    @property
    def sorted_stats(self) -> np.ndarray:
        return self.gem.sorted_stats

    def score(self, x) -> float:
        return gem_score(self.gem, project(self.pca, x))
