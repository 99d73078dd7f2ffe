import numpy as np
import pytest
import statsmodels.api as sm

from covfdr import FitError
from covfdr.glm import is_separated, logistic_irls, poisson_irls


def test_poisson_matches_statsmodels(rng):
    x = np.linspace(-3, 3, 40)
    X = np.column_stack([np.ones_like(x), x, x**2])
    y = rng.poisson(np.exp(3 - 0.5 * x**2))
    ours = poisson_irls(X, y)
    ref = sm.GLM(y, X, family=sm.families.Poisson()).fit(tol=1e-12)
    np.testing.assert_allclose(ours.coef, ref.params, rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(ours.cov, ref.cov_params(), rtol=1e-5)


def test_logistic_matches_statsmodels(rng):
    x = np.linspace(-3, 3, 30)
    X = np.column_stack([np.ones_like(x), x, x**2, x**3])
    n = rng.integers(20, 200, x.size)
    s = rng.binomial(n, 1 / (1 + np.exp(-(-1 + 0.6 * x))))
    ours = logistic_irls(X, s, n, tol=1e-12)
    ref = sm.GLM(np.column_stack([s, n - s]), X, family=sm.families.Binomial()).fit(tol=1e-12)
    assert ours.converged
    np.testing.assert_allclose(ours.coef, ref.params, rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(ours.cov, ref.cov_params(), rtol=1e-5)


def test_poisson_degenerate_design():
    X = np.column_stack([np.ones(5), np.arange(5.0)])
    with pytest.raises(FitError, match="degenerate design"):
        poisson_irls(X, np.array([0, 0, 7, 0, 0]))


def test_separated_fit_detected_and_ridge_recovers():
    x = np.linspace(-2, 2, 20)
    X = np.column_stack([np.ones_like(x), x])
    n = np.full(x.size, 10.0)
    s = np.where(x > 0, n, 0.0)
    assert is_separated(logistic_irls(X, s, n))
    pen = logistic_irls(X, s, n, penalty=1e-4)
    assert pen.converged and np.all(np.isfinite(pen.cov))


def test_intercept_is_not_penalized():
    # with a flat design only the intercept moves, so the ridge must leave it alone
    X = np.column_stack([np.ones(10), np.zeros(10)])
    n = np.full(10, 50.0)
    s = np.full(10, 20.0)
    res = logistic_irls(X, s, n, penalty=5.0, tol=1e-12)
    assert res.coef[0] == pytest.approx(np.log(0.4 / 0.6), abs=1e-9)


def test_all_successes_converge_to_one():
    x = np.linspace(-3, 3, 25)
    X = np.column_stack([np.ones_like(x), x])
    n = np.full(x.size, 4.0)
    res = logistic_irls(X, n, n, penalty=1e-4)
    assert res.converged
    assert np.all(res.fitted >= 0.99)
