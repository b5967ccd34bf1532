import math

import numpy as np
import pytest
from scipy import stats as sps

from tailwatch.simulation import (
    GridModel,
    StreamSpec,
    grid_sample,
    grid_source,
    make_grid_model,
    pool_stream,
)


def test_make_grid_model_shapes_and_determinism():
    a = make_grid_model(n_measurements=80, n_states=57, sigma2=0.01, seed=3)
    b = make_grid_model(n_measurements=80, n_states=57, sigma2=0.01, seed=3)
    assert a.h_matrix.shape == (80, 57) and a.phi.shape == (57,)
    assert np.array_equal(a.h_matrix, b.h_matrix) and np.array_equal(a.phi, b.phi)
    c = make_grid_model(seed=4)
    assert not np.array_equal(a.h_matrix, c.h_matrix)


def test_grid_sample_noiseless_limit_returns_nominal_mean():
    model = make_grid_model(n_measurements=10, n_states=5, sigma2=1e-30, seed=0)
    x = grid_sample(model, 0.0, np.random.default_rng(1))
    np.testing.assert_allclose(x, model.nominal_mean, atol=1e-10)


def test_grid_sample_noise_covariance_is_isotropic():
    model = make_grid_model(n_measurements=80, n_states=57, sigma2=0.01, seed=5)
    draws = grid_sample(model, 0.0, np.random.default_rng(6), size=100_000)
    assert draws.shape == (100_000, 80)
    variances = draws.var(axis=0)
    assert np.all(np.abs(variances - 0.01) <= 0.001)  # +-10% per entry
    # off-diagonal correlations are noise-level
    centered = draws - draws.mean(axis=0)
    corr = centered[:, :10].T @ centered[:, 10:20] / (100_000 * 0.01)
    assert np.max(np.abs(corr)) < 0.02


def test_grid_sample_mean_matches_model():
    model = make_grid_model(n_measurements=80, n_states=57, sigma2=0.01, seed=7)
    draws = grid_sample(model, 0.0, np.random.default_rng(8), size=100_000)
    limit = 3.0 * 0.1 / math.sqrt(100_000.0)
    assert np.all(np.abs(draws.mean(axis=0) - model.nominal_mean) <= limit)


def test_grid_sample_attack_variance_oracle():
    # Uniform[-m, m] has variance m^2 / 3
    model = make_grid_model(n_measurements=40, n_states=20, sigma2=1e-12, seed=9)
    draws = grid_sample(model, 0.14, np.random.default_rng(10), size=100_000)
    expected = 0.14**2 / 3.0
    assert np.all(np.abs(draws.var(axis=0) - expected) <= 0.1 * expected)


def test_grid_sample_rejects_negative_attack():
    model = make_grid_model(n_measurements=4, n_states=3, seed=0)
    with pytest.raises(ValueError):
        grid_sample(model, -0.1, np.random.default_rng(0))


def test_grid_model_validation():
    with pytest.raises(ValueError):
        GridModel(h_matrix=np.ones((4, 3)), phi=np.ones(2), sigma2=0.1)
    with pytest.raises(ValueError):
        GridModel(h_matrix=np.ones((4, 3)), phi=np.ones(3), sigma2=0.0)


# --------------------------------------------------------------------------
# pool streams
# --------------------------------------------------------------------------


def test_pool_stream_no_change_uses_pre_only():
    pre = np.array([[1.0], [2.0]])
    spec = StreamSpec(tau=math.inf, pre_source=pre, post_source=None, horizon=50)
    values = {v[0] for v in pool_stream(spec, np.random.default_rng(0))}
    assert values <= {1.0, 2.0}


def test_pool_stream_worst_case_change_uses_post_only():
    pre = np.array([[1.0]])
    post = np.array([[9.0]])
    spec = StreamSpec(tau=1, pre_source=pre, post_source=post, horizon=20)
    assert all(v[0] == 9.0 for v in pool_stream(spec, np.random.default_rng(0)))


def test_pool_stream_switches_at_tau():
    pre = np.array([[0.0]])
    post = np.array([[1.0]])
    spec = StreamSpec(tau=5, pre_source=pre, post_source=post, horizon=8)
    values = [v[0] for v in pool_stream(spec, np.random.default_rng(0))]
    assert values == [0.0] * 4 + [1.0] * 4


def test_pool_stream_singleton_pool_is_constant():
    pre = np.array([[3.0, 4.0]])
    spec = StreamSpec(tau=math.inf, pre_source=pre, post_source=None, horizon=10)
    for v in pool_stream(spec, np.random.default_rng(2)):
        np.testing.assert_array_equal(v, [3.0, 4.0])


def test_pool_stream_deterministic_under_seed():
    pool = np.random.default_rng(3).normal(size=(30, 2))
    spec = StreamSpec(tau=math.inf, pre_source=pool, post_source=None, horizon=100)
    a = np.array(list(pool_stream(spec, np.random.default_rng(11))))
    b = np.array(list(pool_stream(spec, np.random.default_rng(11))))
    assert np.array_equal(a, b)


def test_pool_stream_draws_uniformly():
    pool = np.arange(10.0).reshape(-1, 1)
    spec = StreamSpec(tau=math.inf, pre_source=pool, post_source=None, horizon=10_000)
    draws = np.array([v[0] for v in pool_stream(spec, np.random.default_rng(13))])
    counts = np.bincount(draws.astype(int), minlength=10)
    chi2 = ((counts - 1000.0) ** 2 / 1000.0).sum()
    assert chi2 < sps.chi2.ppf(0.99, df=9)


def test_pool_stream_empty_pool_rejected():
    spec = StreamSpec(
        tau=math.inf, pre_source=np.zeros((0, 2)), post_source=None, horizon=5
    )
    with pytest.raises(ValueError):
        next(pool_stream(spec, np.random.default_rng(0)))


def test_stream_spec_validation():
    pool = np.ones((3, 1))
    with pytest.raises(ValueError):
        StreamSpec(tau=0, pre_source=pool, post_source=pool, horizon=5)
    with pytest.raises(ValueError):
        StreamSpec(tau=3, pre_source=pool, post_source=None, horizon=5)
    with pytest.raises(ValueError):
        StreamSpec(tau=math.inf, pre_source=pool, post_source=None, horizon=0)


def test_grid_source_inside_stream_spec():
    model = make_grid_model(n_measurements=6, n_states=4, sigma2=0.01, seed=1)
    spec = StreamSpec(
        tau=4,
        pre_source=grid_source(model, 0.0),
        post_source=grid_source(model, 5.0),
        horizon=6,
    )
    pts = np.array(list(pool_stream(spec, np.random.default_rng(21))))
    assert pts.shape == (6, 6)
    pre_dev = np.abs(pts[:3] - model.nominal_mean).max()
    post_dev = np.abs(pts[3:] - model.nominal_mean).max()
    assert pre_dev < 1.0 < post_dev  # the injection dominates after tau
