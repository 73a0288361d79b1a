import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esgcvar import black_litterman as bl
from esgcvar.market_data import ConfigurationError

from .conftest import make_esg


def dense_posterior(tau, sigma, pi, P, v, omega):
    """Textbook form with explicit inverses, as an independent oracle."""
    ts_inv = np.linalg.inv(tau * sigma)
    w = np.linalg.inv(omega)
    precision = ts_inv + P.T @ w @ P
    cov = np.linalg.inv(precision)
    return cov @ (ts_inv @ pi + P.T @ w @ v), cov


def spd(rng, m, scale=1e-4):
    a = rng.normal(size=(m, m))
    return scale * (a @ a.T / m + 0.5 * np.eye(m))


def test_lambda_zero_gives_renormalized_index_weights():
    np.testing.assert_allclose(bl.blend_weights([0.3, 0.1], [10.0, 90.0], 0.0), [0.75, 0.25], rtol=1e-15)


def test_lambda_one_gives_pure_esg_weights():
    np.testing.assert_allclose(bl.blend_weights([0.3, 0.1], [10.0, 90.0], 1.0), [0.1, 0.9], rtol=1e-15)


def test_half_blend_hand_example():
    np.testing.assert_allclose(bl.blend_weights([0.6, 0.4], [50.0, 50.0], 0.5), [0.55, 0.45], rtol=1e-15)


def test_equilibrium_weights_from_table():
    dates = pd.bdate_range("2020-12-01", "2021-02-01")
    esg = make_esg({2020: {"A": 50.0, "B": 50.0, "C": 80.0}}, {"A": 0.6, "B": 0.2, "C": 0.2}, dates)
    w = bl.equilibrium_weights(esg, ["A", "B"], pd.Timestamp("2021-01-05"), 0.5)
    np.testing.assert_allclose(w, [0.5 * 0.75 + 0.25, 0.5 * 0.25 + 0.25], rtol=1e-15)


def test_zero_score_sum_is_configuration_error():
    with pytest.raises(ConfigurationError):
        bl.esg_weights([0.0, 0.0])


def test_premium_examples():
    sigma = np.array([[4.0, 1.0], [1.0, 9.0]]) * 1e-4
    np.testing.assert_allclose(bl.equilibrium_premium(2.5, sigma, [0.5, 0.5]), [6.25e-4, 12.5e-4], rtol=1e-14)
    np.testing.assert_array_equal(bl.equilibrium_premium(0.0, sigma, [0.5, 0.5]), [0.0, 0.0])
    m = 4
    pi = bl.equilibrium_premium(3.0, 2e-4 * np.eye(m), np.full(m, 1 / m))
    np.testing.assert_allclose(pi, np.full(m, 3.0 * 2e-4 / m), rtol=1e-14)


def test_no_views_returns_prior_exactly():
    rng = np.random.default_rng(0)
    sigma, pi = spd(rng, 5), rng.normal(0, 1e-3, 5)
    post = bl.posterior(0.05, sigma, pi)
    np.testing.assert_array_equal(post.mu_bl, pi)
    np.testing.assert_array_equal(bl.posterior(0.05, sigma, pi, bl.BlViews()).mu_bl, pi)


def test_exact_views_pin_the_mean():
    rng = np.random.default_rng(1)
    m = 4
    sigma, pi, v = spd(rng, m), rng.normal(0, 1e-3, m), rng.normal(0, 1e-3, m)
    post = bl.posterior(0.05, sigma, pi, bl.BlViews(np.eye(m), v, 1e-12 * np.eye(m)))
    assert np.max(np.abs(post.mu_bl - v)) / np.max(np.abs(v)) < 1e-6


def test_published_pick_matrix_against_dense_oracle():
    P = np.array([[1.0, 0.0], [-1.0, 1.0]])
    v = np.array([0.05, 0.0])
    omega = np.diag([0.0001, 0.01])
    sigma = np.array([[0.04, 0.006], [0.006, 0.09]])
    pi = bl.equilibrium_premium(2.5, sigma, [0.6, 0.4])
    post = bl.posterior(0.05, sigma, pi, bl.BlViews(P, v, omega))
    mu, cov = dense_posterior(0.05, sigma, pi, P, v, omega)
    np.testing.assert_allclose(post.mu_bl, mu, rtol=1e-12)
    np.testing.assert_allclose(post.sigma_bl_mu, cov, rtol=1e-10)
    # the confident view on asset 1 dominates
    assert abs(post.mu_bl[0] - 0.05) < abs(pi[0] - 0.05)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6), st.integers(1, 3))
def test_posterior_matches_dense_oracle(seed, m, k):
    rng = np.random.default_rng(seed)
    sigma, pi = spd(rng, m), rng.normal(0, 1e-3, m)
    P = rng.normal(size=(k, m))
    v = rng.normal(0, 1e-3, k)
    omega = np.diag(rng.uniform(1e-7, 1e-5, k))
    post = bl.posterior(0.05, sigma, pi, bl.BlViews(P, v, omega))
    mu, cov = dense_posterior(0.05, sigma, pi, P, v, omega)
    np.testing.assert_allclose(post.mu_bl, mu, rtol=1e-8, atol=1e-14)
    np.testing.assert_allclose(post.sigma_bl_mu, cov, rtol=1e-7, atol=1e-16)


def test_vacuous_view_barely_moves_the_prior():
    rng = np.random.default_rng(2)
    sigma, pi = spd(rng, 4), rng.normal(0, 1e-3, 4)
    P = (sigma @ np.ones(4))[None, :]
    post = bl.posterior(0.05, sigma, pi, bl.BlViews(P, np.array([0.5]), np.array([[1e12]])))
    assert np.max(np.abs(post.mu_bl - pi)) / np.max(np.abs(pi)) < 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6), st.integers(1, 4))
def test_views_reduce_uncertainty(seed, m, k):
    rng = np.random.default_rng(seed)
    sigma = spd(rng, m)
    P = rng.normal(size=(k, m))
    P[np.all(P == 0, axis=1), 0] = 1.0
    views = bl.BlViews(P, rng.normal(0, 1e-3, k), np.diag(rng.uniform(1e-8, 1e-4, k)))
    post = bl.posterior(0.05, sigma, rng.normal(0, 1e-3, m), views)
    gap = 0.05 * sigma - post.sigma_bl_mu
    assert np.linalg.eigvalsh(0.5 * (gap + gap.T)).min() >= -1e-12 * np.abs(sigma).max()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100))
def test_rescaling_a_view_row_changes_nothing(seed, c):
    rng = np.random.default_rng(seed)
    m = 3
    sigma, pi = spd(rng, m), rng.normal(0, 1e-3, m)
    P = rng.normal(size=(2, m))
    v = rng.normal(0, 1e-3, 2)
    om = rng.uniform(1e-7, 1e-5, 2)
    base = bl.posterior(0.05, sigma, pi, bl.BlViews(P, v, np.diag(om))).mu_bl
    P2, v2, om2 = P.copy(), v.copy(), om.copy()
    P2[1] *= c
    v2[1] *= c
    om2[1] *= c * c
    scaled = bl.posterior(0.05, sigma, pi, bl.BlViews(P2, v2, np.diag(om2))).mu_bl
    np.testing.assert_allclose(scaled, base, rtol=1e-10, atol=1e-14)


def test_views_from_config_rows():
    rows = [{"picks": {"A": 1.0, "C": -1.0}, "value": 0.001, "uncertainty": 1e-6},
            {"picks": {"Z": 1.0}, "value": 0.5, "uncertainty": 1.0}]
    views = bl.BlViews.from_rows(rows, ["A", "B", "C"])
    assert views.k == 1
    np.testing.assert_array_equal(views.P, [[1.0, 0.0, -1.0]])
    assert bl.BlViews.from_rows([], ["A"]).k == 0


@pytest.mark.parametrize("P, v, omega", [
    (np.ones((2, 2)), np.ones(1), np.eye(1)),
    (np.zeros((1, 2)), np.ones(1), np.eye(1)),
    (np.ones((1, 2)), np.ones(1), np.zeros((1, 1))),
    (np.ones((2, 2)), np.ones(2), np.ones((2, 2))),
])
def test_malformed_views_rejected(P, v, omega):
    with pytest.raises(ValueError):
        bl.BlViews(P, v, omega)


def test_nonpositive_tau_rejected():
    with pytest.raises(ValueError):
        bl.posterior(0.0, np.eye(2), np.zeros(2))
