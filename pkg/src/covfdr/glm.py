"""Small IRLS solvers for the two GLMs used here: Poisson (log link) and binomial (logit link)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import FitError


@dataclass(frozen=True)
class GLMResult:
    coef: np.ndarray
    cov: np.ndarray
    fitted: np.ndarray
    n_iter: int
    converged: bool
    penalty: float = 0.0


def _solve(info: np.ndarray, score: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(info, score)
    except np.linalg.LinAlgError as exc:
        raise FitError("degenerate design") from exc


def poisson_irls(
    X: np.ndarray, y: np.ndarray, tol: float = 1e-8, max_iter: int = 100
) -> GLMResult:
    """Poisson regression of counts ``y`` on design ``X`` (first column is the intercept)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.linalg.matrix_rank(X[y > 0]) < min(2, X.shape[1]):
        raise FitError("degenerate design")
    def deviance(mu):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return 2.0 * np.sum(np.where(y > 0, y * np.log(y / mu), 0.0) - (y - mu))

    beta = np.zeros(X.shape[1])
    beta[0] = np.log(max(y.mean(), 1e-12))
    mu = np.exp(X @ beta)
    dev_old = deviance(mu)
    for it in range(1, max_iter + 1):
        info = X.T @ (mu[:, None] * X)
        step = _solve(info, X.T @ (y - mu))
        # step-halving keeps the deviance monotone
        for _ in range(30):
            with np.errstate(over="ignore"):
                mu_new = np.exp(X @ (beta + step))
            dev = deviance(mu_new)
            if np.isfinite(dev) and dev <= dev_old + 1e-12 * abs(dev_old):
                break
            step = step / 2
        else:
            raise FitError("IRLS diverged")
        beta = beta + step
        mu = mu_new
        if abs(dev - dev_old) <= tol * (abs(dev) + 0.1):
            break
        dev_old = dev
    else:
        raise FitError(f"IRLS did not converge in {max_iter} iterations")
    info = X.T @ (mu[:, None] * X)
    return GLMResult(coef=beta, cov=np.linalg.inv(info), fitted=mu, n_iter=it, converged=True)


def logistic_irls(
    X: np.ndarray,
    successes: np.ndarray,
    trials: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 50,
    penalty: float = 0.0,
) -> GLMResult:
    """Binomial logistic regression of ``successes`` out of ``trials``.

    A positive ``penalty`` adds ``penalty/2 * |beta[1:]|^2`` to the negative
    log-likelihood; the intercept is not penalized. Non-convergence is reported through ``converged`` rather than
    raised so callers can fall back to a penalized fit.
    """
    X = np.asarray(X, dtype=float)
    s = np.asarray(successes, dtype=float)
    n = np.asarray(trials, dtype=float)
    keep = n > 0
    X, s, n = X[keep], s[keep], n[keep]
    ridge = penalty * np.eye(X.shape[1])
    ridge[0, 0] = 0.0

    def objective(b):
        eta = X @ b
        # negative penalized log-likelihood, stable for large |eta|
        return np.sum(n * np.logaddexp(0, eta) - s * eta) + 0.5 * b @ ridge @ b

    p0 = np.clip(s.sum() / n.sum(), 1e-3, 1 - 1e-3)
    beta = np.zeros(X.shape[1])
    beta[0] = np.log(p0 / (1 - p0))
    obj = objective(beta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = expit(X @ beta)
        w = n * mu * (1 - mu)
        info = X.T @ (w[:, None] * X) + ridge
        try:
            step = np.linalg.solve(info, X.T @ (s - n * mu) - ridge @ beta)
        except np.linalg.LinAlgError:
            break
        for _ in range(30):
            new_obj = objective(beta + step)
            if np.isfinite(new_obj) and new_obj <= obj + 1e-12 * abs(obj):
                break
            step = step / 2
        beta = beta + step
        obj_change = abs(new_obj - obj)
        obj = new_obj
        if not np.all(np.isfinite(beta)):
            break
        # small steps, or an objective that has stopped moving (the all-success
        # case has no finite optimum but a vanishing objective)
        if np.max(np.abs(step)) <= tol * (1.0 + np.max(np.abs(beta))) or obj_change <= tol * (abs(obj) + 0.1):
            converged = True
            break
    mu = expit(X @ beta)
    w = n * mu * (1 - mu)
    info = X.T @ (w[:, None] * X) + ridge
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        cov = np.full(info.shape, np.nan)
        converged = False
    return GLMResult(coef=beta, cov=cov, fitted=mu, n_iter=it, converged=converged, penalty=penalty)


def is_separated(res: GLMResult, eps: float = 1e-8) -> bool:
    """Heuristic check for (quasi-)complete separation in a logistic fit."""
    if not res.converged or not np.all(np.isfinite(res.coef)):
        return True
    if np.any(~np.isfinite(res.cov)):
        return True
    return bool(np.any((res.fitted < eps) | (res.fitted > 1 - eps)))
