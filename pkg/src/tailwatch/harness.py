"""Monte Carlo evaluation: detection delay, false alarm period, tradeoff and ROC curves.

Each trial builds a fresh detector from a zero-argument factory and feeds it
an independent stream drawn from its own child of the master seed, so every
summary is reproducible from (configuration, seed) regardless of how trials
are scheduled.  Detector factories must be picklable when jobs > 1.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .simulation import StreamSpec, pool_stream

DetectorFactory = Callable[[], object]


@dataclass(frozen=True)
class DelaySummary:
    """Mean worst-case delay (Gamma - tau)+ over detecting trials."""

    add: float
    add_se: float
    trials: int
    n_detected: int
    censored_frac: float


@dataclass(frozen=True)
class AfpSummary:
    """Mean stopping time with no change; censored runs contribute the horizon.

    A nonzero censored fraction biases the mean downward (the estimate is a
    lower bound on the true period).
    """

    afp: float
    afp_se: float
    trials: int
    n_stopped: int
    censored_frac: float


@dataclass(frozen=True)
class TradeoffPoint:
    h: float
    add: float
    add_se: float
    afp: float
    afp_se: float
    delay_censored_frac: float
    afp_censored_frac: float


@dataclass(frozen=True)
class RocPoint:
    h: float
    tpr: float
    far: float


def run_stream(detector, points) -> int | None:
    """Feed points until the detector stops; None if the stream runs out first."""
    for x in points:
        detector.step(x)
        if detector.stopped_at is not None:
            return detector.stopped_at
    return None


def _gamma_chunk(args) -> list:
    factory, spec, children = args
    out = []
    for child in children:
        rng = np.random.default_rng(child)
        out.append(run_stream(factory(), pool_stream(spec, rng)))
    return out


def _seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def _gamma_trials(
    factory: DetectorFactory, spec: StreamSpec, trials: int, seed, jobs: int
) -> list:
    children = _seed_sequence(seed).spawn(trials)
    if jobs <= 1:
        return _gamma_chunk((factory, spec, children))
    n_chunks = min(trials, jobs * 4)
    bounds = np.linspace(0, trials, n_chunks + 1).astype(int)
    tasks = [
        (factory, spec, children[a:b]) for a, b in zip(bounds[:-1], bounds[1:]) if b > a
    ]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_gamma_chunk, tasks))
    return [g for part in parts for g in part]


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    if values.size == 0:
        return math.nan, math.nan
    if values.size == 1:
        return float(values[0]), math.nan
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def avg_detection_delay(
    factory: DetectorFactory, spec: StreamSpec, trials: int, seed=None, jobs: int = 1
) -> DelaySummary:
    """Mean of (Gamma - tau)+ over trials that stop within the spec horizon."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    gammas = _gamma_trials(factory, spec, trials, seed, jobs)
    delays = np.array([max(0, g - spec.tau) for g in gammas if g is not None], dtype=np.float64)
    add, se = _mean_se(delays)
    return DelaySummary(
        add=add,
        add_se=se,
        trials=trials,
        n_detected=int(delays.size),
        censored_frac=1.0 - delays.size / trials,
    )


def avg_false_alarm_period(
    factory: DetectorFactory, spec: StreamSpec, trials: int, seed=None, jobs: int = 1
) -> AfpSummary:
    """Mean stopping time over no-change trials (spec.tau must be infinite)."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if not math.isinf(spec.tau):
        raise ValueError("false-alarm runs need a no-change spec (tau = inf)")
    gammas = _gamma_trials(factory, spec, trials, seed, jobs)
    n_stopped = sum(g is not None for g in gammas)
    capped = np.array(
        [spec.horizon if g is None else g for g in gammas], dtype=np.float64
    )
    afp, se = _mean_se(capped)
    return AfpSummary(
        afp=afp,
        afp_se=se,
        trials=trials,
        n_stopped=n_stopped,
        censored_frac=1.0 - n_stopped / trials,
    )


def tradeoff_curve(
    factory_of_h: Callable[[float], DetectorFactory],
    change_spec: StreamSpec,
    nominal_spec: StreamSpec,
    thresholds: Sequence[float],
    trials: int,
    seed=None,
    jobs: int = 1,
) -> list[TradeoffPoint]:
    """One (delay, false-alarm period) point per threshold."""
    master = _seed_sequence(seed)
    seeds = master.spawn(2 * len(thresholds))
    points = []
    for i, h in enumerate(thresholds):
        delay = avg_detection_delay(factory_of_h(h), change_spec, trials, seeds[2 * i], jobs)
        afp = avg_false_alarm_period(
            factory_of_h(h), nominal_spec, trials, seeds[2 * i + 1], jobs
        )
        points.append(
            TradeoffPoint(
                h=float(h),
                add=delay.add,
                add_se=delay.add_se,
                afp=afp.afp,
                afp_se=afp.afp_se,
                delay_censored_frac=delay.censored_frac,
                afp_censored_frac=afp.censored_frac,
            )
        )
    return points


def roc_curve(
    factory_of_h: Callable[[float], DetectorFactory],
    change_spec: StreamSpec,
    nominal_spec: StreamSpec,
    thresholds: Sequence[float],
    trials: int,
    seed=None,
    window: int = 10,
    jobs: int = 1,
) -> list[RocPoint]:
    """True-positive rate (detection within `window` steps of tau) vs 1 / AFP.

    Change trials only need to run to tau + window: any later stop counts as
    a miss, so the change spec's horizon is clipped accordingly.
    """
    if math.isinf(change_spec.tau):
        raise ValueError("ROC change runs need a finite tau")
    master = _seed_sequence(seed)
    seeds = master.spawn(2 * len(thresholds))
    clipped = StreamSpec(
        tau=change_spec.tau,
        pre_source=change_spec.pre_source,
        post_source=change_spec.post_source,
        horizon=min(change_spec.horizon, int(change_spec.tau) + window),
    )
    points = []
    for i, h in enumerate(thresholds):
        gammas = _gamma_trials(factory_of_h(h), clipped, trials, seeds[2 * i], jobs)
        hits = sum(
            g is not None and clipped.tau <= g <= clipped.tau + window for g in gammas
        )
        afp = avg_false_alarm_period(
            factory_of_h(h), nominal_spec, trials, seeds[2 * i + 1], jobs
        )
        points.append(RocPoint(h=float(h), tpr=hits / trials, far=1.0 / afp.afp))
    return points
