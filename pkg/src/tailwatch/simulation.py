"""Synthetic data sources: a linear DC grid model and pool resampling streams."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterator, Union

import numpy as np

from .util import as_points, frozen


@dataclass(frozen=True)
class GridModel:
    """Linear measurement model x = H phi + omega with isotropic Gaussian noise.

    The state vector is held fixed (steady-state operation); anomalies enter
    as an additive injection on the measurements.
    """

    h_matrix: np.ndarray  # (n_measurements, n_states)
    phi: np.ndarray       # (n_states,)
    sigma2: float
    seed: int | None = None

    def __post_init__(self):
        if self.sigma2 <= 0.0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if self.h_matrix.ndim != 2 or self.h_matrix.shape[1] != self.phi.shape[0]:
            raise ValueError("h_matrix and phi dimensions are inconsistent")

    @property
    def n_measurements(self) -> int:
        return int(self.h_matrix.shape[0])

    @cached_property
    def nominal_mean(self) -> np.ndarray:
        return frozen(self.h_matrix @ self.phi)


def make_grid_model(
    n_measurements: int = 80,
    n_states: int = 57,
    sigma2: float = 0.01,
    seed=0,
) -> GridModel:
    """Seeded random grid: H entries N(0,1)/sqrt(n_states), fixed random state."""
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((n_measurements, n_states)) / math.sqrt(n_states)
    phi = rng.standard_normal(n_states)
    return GridModel(h_matrix=frozen(h), phi=frozen(phi), sigma2=float(sigma2), seed=seed)


def grid_sample(model: GridModel, attack_mag: float, rng: np.random.Generator, size=None):
    """Measurement draw(s): H phi plus i.i.d. U[-attack_mag, attack_mag] injection plus noise.

    attack_mag = 0 yields nominal operation; the injection is redrawn
    independently at every step.
    """
    if attack_mag < 0.0:
        raise ValueError(f"attack_mag must be >= 0, got {attack_mag}")
    m = model.n_measurements
    shape = (m,) if size is None else (size, m)
    x = model.nominal_mean + math.sqrt(model.sigma2) * rng.standard_normal(shape)
    if attack_mag > 0.0:
        x += rng.uniform(-attack_mag, attack_mag, size=shape)
    return x


PointSource = Union[np.ndarray, Callable[[np.random.Generator], np.ndarray]]


@dataclass(frozen=True)
class StreamSpec:
    """Change-point stream recipe: pre/post sources, change step tau, horizon.

    Sources are either point pools (sampled uniformly with replacement) or
    callables taking the stream's generator.  tau = math.inf means the
    change never happens.
    """

    tau: float
    pre_source: PointSource
    post_source: PointSource | None
    horizon: int

    def __post_init__(self):
        if not self.tau >= 1:
            raise ValueError(f"tau must be >= 1, got {self.tau}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.tau <= self.horizon and self.post_source is None:
            raise ValueError("post_source required when tau falls inside the horizon")


def grid_source(model: GridModel, attack_mag: float) -> PointSource:
    """Stream source drawing grid measurements at a fixed attack magnitude."""
    return lambda rng: grid_sample(model, attack_mag, rng)


def _checked_pool(source: PointSource, name: str) -> PointSource:
    if callable(source):
        return source
    pool = as_points(source, name)
    return pool


def pool_stream(spec: StreamSpec, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Yield horizon points: pre-change source before tau, post-change from tau on.

    Pool draws are uniform with replacement; the sequence is a pure function
    of (spec, generator state).
    """
    pre = _checked_pool(spec.pre_source, "pre_source")
    post = None
    if spec.post_source is not None:
        post = _checked_pool(spec.post_source, "post_source")
    for t in range(1, spec.horizon + 1):
        src = pre if t < spec.tau else post
        if callable(src):
            yield src(rng)
        else:
            yield src[int(rng.integers(src.shape[0]))]
