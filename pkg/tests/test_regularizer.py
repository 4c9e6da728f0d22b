import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ftql.regularizer import (
    ENTROPIC,
    EUCLIDEAN,
    choice_map,
    custom_regularizer,
    get_regularizer,
    initial_scores_for,
    rate_function,
    simplex_projection,
    softmax,
)

scores = arrays(
    float,
    st.integers(2, 10),
    elements=st.floats(-50, 50, allow_nan=False, allow_infinity=False),
)


def simplex_grid(dim, step):
    m = int(round(1 / step))
    if dim == 2:
        k = np.arange(m + 1)[:, None]
        return np.hstack([k, m - k]) / m
    i, j = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="ij")
    keep = i + j <= m
    i, j = i[keep], j[keep]
    return np.stack([i, j, m - i - j], axis=1) / m


def grid_argmax(r, y, step=1e-3):
    x = simplex_grid(len(y), step)
    vals = x @ y - np.sum(r.theta(x), axis=1)
    return x[np.argmax(vals)]


def test_worked_values():
    np.testing.assert_allclose(choice_map(ENTROPIC, [0, 0, 0]), [1 / 3] * 3)
    np.testing.assert_allclose(choice_map(ENTROPIC, np.log([0.6, 0.4])), [0.6, 0.4], atol=1e-15)
    np.testing.assert_allclose(choice_map(EUCLIDEAN, [0.5, 0.1]), [0.7, 0.3], atol=1e-15)
    np.testing.assert_array_equal(choice_map(EUCLIDEAN, [10, 0]), [1.0, 0.0])


def test_rate_function_values():
    assert rate_function(ENTROPIC, 1.0) == 1.0
    assert rate_function(ENTROPIC, 5.0) == 1.0
    assert rate_function(ENTROPIC, -5.0) == pytest.approx(math.exp(-6), rel=1e-15)
    assert rate_function(ENTROPIC, -np.inf) == 0.0
    assert rate_function(EUCLIDEAN, -0.2) == 0.0
    assert rate_function(EUCLIDEAN, 0.3) == 0.3
    assert rate_function(EUCLIDEAN, 1.7) == 1.0


@pytest.mark.parametrize("r", [ENTROPIC, EUCLIDEAN])
def test_rate_function_inverts_derivative(r):
    z = np.array([0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
    np.testing.assert_allclose(rate_function(r, r.dtheta(z)), z, atol=1e-9)
    grid = np.linspace(-10, 3, 1001)
    assert np.all(np.diff(rate_function(r, grid)) >= 0)


def test_initial_scores():
    np.testing.assert_allclose(initial_scores_for(ENTROPIC, [0.8, 0.2]), np.log([0.8, 0.2]))
    np.testing.assert_array_equal(initial_scores_for(EUCLIDEAN, [0.6, 0.4]), [0.6, 0.4])
    with pytest.raises(ValueError):
        initial_scores_for(ENTROPIC, [1.0, 0.0])
    with pytest.raises(ValueError):
        initial_scores_for(EUCLIDEAN, [0.7, 0.7])


@pytest.mark.parametrize("r", [ENTROPIC, EUCLIDEAN])
def test_initial_scores_round_trip(r, rng):
    for _ in range(200):
        x = rng.dirichlet(np.ones(rng.integers(2, 6)))
        np.testing.assert_allclose(choice_map(r, initial_scores_for(r, x)), x, atol=1e-9)


@pytest.mark.parametrize("r", [ENTROPIC, EUCLIDEAN])
def test_feasibility_bulk(r, rng):
    for dim in range(2, 11):
        y = rng.normal(scale=20, size=(10_000, dim))
        x = choice_map(r, y)
        assert np.all(x >= 0)
        np.testing.assert_allclose(x.sum(axis=1), 1.0, atol=1e-9)


@pytest.mark.parametrize("r", [ENTROPIC, EUCLIDEAN])
@settings(max_examples=200, deadline=None)
@given(y=scores, c=st.floats(-100, 100))
def test_shift_invariance(r, y, c):
    np.testing.assert_allclose(choice_map(r, y + c), choice_map(r, y), atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(y=scores)
def test_entropic_interior_euclidean_reaches_boundary(y):
    assert np.all(choice_map(ENTROPIC, y - y.max() + 30) > 0)
    x = choice_map(EUCLIDEAN, y)
    dominated = y < y.max() - 1
    assert np.all(x[dominated] == 0)


@pytest.mark.parametrize("r", [ENTROPIC, EUCLIDEAN])
@pytest.mark.parametrize("dim", [2, 3])
def test_matches_grid_search_oracle(r, dim, rng):
    for _ in range(10):
        y = rng.normal(scale=1.5, size=dim)
        best = grid_argmax(r, y)
        assert np.max(np.abs(choice_map(r, y) - best)) <= 2e-3


def test_large_scores_do_not_overflow():
    x = choice_map(ENTROPIC, [1e6, 0.0, -1e6])
    assert np.all(np.isfinite(x))
    np.testing.assert_array_equal(x, [1.0, 0.0, 0.0])


@pytest.mark.parametrize("bad", [[np.nan, 0.0], [np.inf, 0.0], []])
def test_invalid_scores(bad):
    with pytest.raises(ValueError):
        choice_map(ENTROPIC, bad)


def test_custom_kernel_matches_builtins(rng):
    quad = custom_regularizer(lambda z: 0.5 * z**2, lambda z: z)
    ent = custom_regularizer(
        lambda z: np.where(z > 0, z * np.log(np.maximum(z, 1e-300)), 0.0),
        lambda z: 1 + np.log(z),
    )
    for _ in range(20):
        y = rng.normal(size=4)
        np.testing.assert_allclose(choice_map(quad, y), simplex_projection(y), atol=1e-8)
        np.testing.assert_allclose(choice_map(ent, y), softmax(y), atol=1e-8)
    for v in (-3.0, 0.2, 0.9, 2.0):
        assert rate_function(quad, v) == pytest.approx(rate_function(EUCLIDEAN, v), abs=1e-9)
        assert rate_function(ent, v) == pytest.approx(rate_function(ENTROPIC, v), abs=1e-9)


def test_kernels_strongly_convex():
    z = np.linspace(1e-3, 1, 1000)
    for r in (ENTROPIC, EUCLIDEAN):
        assert np.all(np.diff(r.dtheta(z)) > 0)
    assert ENTROPIC.steep and not EUCLIDEAN.steep


def test_lookup():
    assert get_regularizer("entropic") is ENTROPIC
    with pytest.raises(ValueError):
        get_regularizer("tsallis")
