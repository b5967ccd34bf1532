"""CUSUM-style accumulation of tail-probability evidence.

Each incoming point is reduced to a summary statistic, the statistic to an
empirical tail probability against the sorted nominal baseline, and the tail
probability to the evidence increment log(alpha / p_hat).  The decision
statistic accumulates the increments, clamped at zero, and an anomaly is
declared the first time it reaches the threshold h.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Protocol

import numpy as np


class Baseline(Protocol):
    """Scoring contract shared by every baseline kind."""

    sorted_stats: np.ndarray

    def score(self, x) -> float: ...


@dataclass
class DetectorConfig:
    """Significance level, decision threshold, and the zero-p-value floor switch."""

    alpha: float
    h: float
    floor_zero_pvalue: bool = True

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.h >= 0.0:
            raise ValueError(f"h must be >= 0, got {self.h}")


@dataclass
class DetectorState:
    """Running decision statistic; serializable for checkpointing."""

    g: float = 0.0
    t: int = 0
    stopped_at: int | None = None


@dataclass(frozen=True)
class StepRecord:
    t: int
    score: float
    p_hat: float
    s_hat: float
    g: float
    stopped: bool


def tail_probability(sorted_stats, stat: float, floor_zero: bool = True) -> float:
    """Fraction of nominal statistics strictly greater than stat.

    Computed by binary search over the ascending baseline; an exact zero is
    floored to 1/N2 when floor_zero is set, so a single extreme outlier
    cannot produce infinite evidence.
    """
    stats = np.asarray(sorted_stats, dtype=np.float64)
    if stats.ndim != 1 or stats.shape[0] == 0:
        raise ValueError("sorted_stats must be a nonempty 1-D array")
    n2 = stats.shape[0]
    exceed = n2 - int(np.searchsorted(stats, stat, side="right"))
    p_hat = exceed / n2
    if p_hat == 0.0 and floor_zero:
        p_hat = 1.0 / n2
    return p_hat


def evidence(p_hat: float, alpha: float) -> float:
    """Evidence increment log(alpha / p_hat): positive iff p_hat < alpha."""
    if not p_hat > 0.0:
        raise ValueError(f"p_hat must be positive, got {p_hat}")
    return math.log(alpha / p_hat)


def update(state: DetectorState, s_hat: float, config: DetectorConfig) -> DetectorState:
    """One clamp-accumulate step; marks the stopping time on threshold crossing."""
    if state.stopped_at is not None:
        raise RuntimeError(f"detector already stopped at step {state.stopped_at}")
    g = max(0.0, state.g + s_hat)
    t = state.t + 1
    return DetectorState(g=g, t=t, stopped_at=t if g >= config.h else None)


def iter_steps(baseline: Baseline, stream: Iterable, config: DetectorConfig) -> Iterator[StepRecord]:
    """Drive the detector over a stream, yielding one record per step.

    Iteration ends at the first alarm or when the stream is exhausted.
    """
    state = DetectorState()
    for x in stream:
        score = baseline.score(x)
        p_hat = tail_probability(baseline.sorted_stats, score, config.floor_zero_pvalue)
        s_hat = evidence(p_hat, config.alpha)
        state = update(state, s_hat, config)
        stopped = state.stopped_at is not None
        yield StepRecord(state.t, score, p_hat, s_hat, state.g, stopped)
        if stopped:
            return


def run(
    baseline: Baseline,
    stream: Iterable,
    config: DetectorConfig,
    record_trajectory: bool = False,
) -> tuple[int | None, list[float] | None]:
    """Stopping time over a stream, or None if the stream ends without an alarm."""
    trajectory: list[float] | None = [] if record_trajectory else None
    for rec in iter_steps(baseline, stream, config):
        if trajectory is not None:
            trajectory.append(rec.g)
        if rec.stopped:
            return rec.t, trajectory
    return None, trajectory


class PValueCusum:
    """Sequential state machine form of the detector (shared stopping-time interface).

    ``step(x)`` ingests one observation and returns the decision statistic;
    ``stopped_at`` is set at the first threshold crossing.
    """

    def __init__(self, baseline: Baseline, config: DetectorConfig):
        self.baseline = baseline
        self.config = config
        self.state = DetectorState()

    @property
    def t(self) -> int:
        return self.state.t

    @property
    def stopped_at(self) -> int | None:
        return self.state.stopped_at

    def step(self, x) -> float:
        score = self.baseline.score(x)
        p_hat = tail_probability(
            self.baseline.sorted_stats, score, self.config.floor_zero_pvalue
        )
        s_hat = evidence(p_hat, self.config.alpha)
        self.state = update(self.state, s_hat, self.config)
        return self.state.g
