"""Class-conditional false discovery rates from the combined analysis.

The separate rate for class A is the combined rate times
``R_A(z) = pi_A0(z) / pi_A(z)``, where ``pi_A(z) = Prob{A | z}`` is estimated by
a weighted logistic regression on binned class proportions and ``pi_A0(z)`` is
the same probability restricted to null cases.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.special import expit, logit

from .core import ClassPartition, DataError, Dataset, FitError, RelevanceFunction
from .density import BinnedCounts, NullEstimate
from .fdr import FdrCurve
from .glm import GLMResult, is_separated, logistic_irls

BASES = ("cubic", "flat_interval", "linear")
CORRECTIONS = ("none", "plug_in_zero", "pA0_hat")
PI_FLOOR = 1e-6
RIDGE_PENALTY = 1e-4


def class_basis(z, basis: str = "cubic", side: str = "positive") -> np.ndarray:
    """Design matrix for logit pi_A(z).

    ``flat_interval`` is ``[1, max(z-1, 0)^2, max(z-1, 0)^3]`` (mirrored to
    ``max(-z-1, 0)`` when ``side="negative"``), constant on ``[-1, 1]``.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if basis == "cubic":
        return np.column_stack([np.ones_like(z), z, z**2, z**3])
    if basis == "linear":
        return np.column_stack([np.ones_like(z), z])
    if basis == "flat_interval":
        t = np.maximum(z - 1, 0) if side == "positive" else np.maximum(-z - 1, 0)
        return np.column_stack([np.ones_like(z), t**2, t**3])
    raise ValueError(f"basis must be one of {BASES}")


def class_basis_derivative(z, basis: str = "cubic", side: str = "positive") -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    zero = np.zeros_like(z)
    if basis == "cubic":
        return np.column_stack([zero, np.ones_like(z), 2 * z, 3 * z**2])
    if basis == "linear":
        return np.column_stack([zero, np.ones_like(z)])
    if basis == "flat_interval":
        if side == "positive":
            t, sign = np.maximum(z - 1, 0), 1.0
        else:
            t, sign = np.maximum(-z - 1, 0), -1.0
        return np.column_stack([zero, sign * 2 * t, sign * 3 * t**2])
    raise ValueError(f"basis must be one of {BASES}")


@dataclass(frozen=True, eq=False)
class ClassProbCurve:
    basis: str
    coefficients: np.ndarray
    coef_covariance: np.ndarray
    side: str = "positive"
    penalized: bool = False
    z_range: tuple[float, float] = (-np.inf, np.inf)

    def design(self, z) -> np.ndarray:
        return class_basis(z, self.basis, self.side)

    def logit(self, z) -> np.ndarray:
        return self.design(z) @ self.coefficients

    def pi(self, z) -> np.ndarray:
        return expit(self.logit(z))

    def sd_logit(self, z) -> np.ndarray:
        X = self.design(z)
        var = np.einsum("ij,jk,ik->i", X, self.coef_covariance, X)
        return np.sqrt(np.maximum(var, 0.0))

    def logit_slope(self, z) -> np.ndarray:
        return class_basis_derivative(z, self.basis, self.side) @ self.coefficients


def fit_class_prob_curve(
    bc: BinnedCounts, basis: str = "cubic", side: str = "positive",
    tol: float = 1e-8, max_iter: int = 50,
) -> ClassProbCurve:
    """Weighted logistic regression of class-A proportions on bin midpoints.

    Equivalent to a binomial GLM with ``N_Ak`` successes in ``N_k`` trials. When
    the plain fit shows separation it is refit with a small ridge penalty.
    """
    if bc.N_Ak is None:
        raise DataError("binned counts carry no class counts")
    if np.count_nonzero(bc.N_k) < 8:
        raise DataError("need at least 8 non-empty bins")
    X = class_basis(bc.spec.midpoints, basis, side)
    res = logistic_irls(X, bc.N_Ak, bc.N_k, tol=tol, max_iter=max_iter)
    penalized = False
    if is_separated(res):
        res = logistic_irls(X, bc.N_Ak, bc.N_k, tol=tol, max_iter=max_iter, penalty=RIDGE_PENALTY)
        penalized = True
        if not res.converged:
            raise FitError("logistic regression did not converge")
    return ClassProbCurve(
        basis=basis, coefficients=res.coef, coef_covariance=res.cov, side=side,
        penalized=penalized, z_range=(bc.spec.lo, bc.spec.hi),
    )


def fit_unbinned_class_curve(
    z: np.ndarray, in_class: np.ndarray, basis: str = "linear", side: str = "positive",
) -> tuple[ClassProbCurve, GLMResult]:
    """Per-case logistic regression of class membership (each case a Bernoulli trial)."""
    z = np.asarray(z, dtype=float)
    y = np.asarray(in_class, dtype=float)
    X = class_basis(z, basis, side)
    res = logistic_irls(X, y, np.ones_like(y))
    penalized = False
    if is_separated(res):
        res = logistic_irls(X, y, np.ones_like(y), penalty=RIDGE_PENALTY)
        penalized = True
        if not res.converged:
            raise FitError("logistic regression did not converge")
    curve = ClassProbCurve(
        basis=basis, coefficients=res.coef, coef_covariance=res.cov, side=side,
        penalized=penalized, z_range=(float(z.min()), float(z.max())),
    )
    return curve, res


@dataclass(frozen=True, eq=False)
class NullClassProb:
    """Prob{A | z} among null cases.

    ``constant``: ``pi_A p_A0 / p0`` (class nulls identical).
    ``parametric``: Bayes rule with class nulls ``N(delta, sigma^2)``.
    ``plug_in_at_zero``: ``pi_A(0)`` read off a fitted class curve.
    """

    kind: str
    value: float | None = None
    pi_A: float | None = None
    null_A: NullEstimate | None = None
    null_B: NullEstimate | None = None

    def log_odds(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if self.kind != "parametric":
            return np.full(z.shape, logit(self.value))
        a, b = self.null_A, self.null_B
        pi_B = 1.0 - self.pi_A
        const = np.log(self.pi_A * a.p0 * b.sigma0) - np.log(pi_B * b.p0 * a.sigma0)
        return const - 0.5 * (((z - a.delta0) / a.sigma0) ** 2 - ((z - b.delta0) / b.sigma0) ** 2)

    def __call__(self, z) -> np.ndarray:
        return expit(self.log_odds(z))

    def tail(self, z, direction: str = "left") -> np.ndarray:
        """Prob_0{A | z_i <= z} (``left``) or Prob_0{A | z_i >= z} (``right``)."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if self.kind != "parametric":
            return np.full(z.shape, self.value)
        a, b = self.null_A, self.null_B
        tail_A = a.cdf(z) if direction == "left" else a.sf(z)
        tail_B = b.cdf(z) if direction == "left" else b.sf(z)
        mass_A = self.pi_A * a.p0 * tail_A
        mass_B = (1 - self.pi_A) * b.p0 * tail_B
        return mass_A / (mass_A + mass_B)


def null_class_prob_curve(
    partition: ClassPartition | float,
    kind: str = "constant",
    nulls: tuple[NullEstimate, NullEstimate] | None = None,
    p_A0: float | None = None,
    p0: float | None = None,
    curve: ClassProbCurve | None = None,
) -> NullClassProb:
    """Build the null class probability.

    ``partition`` may be a ClassPartition or the class-A proportion itself. For
    the constant kind ``p_A0`` defaults to ``p0`` (giving ``pi_A0 = pi_A``).
    """
    pi_A = partition.pi_A if isinstance(partition, ClassPartition) else float(partition)
    if kind == "constant":
        if p_A0 is None or p0 is None:
            return NullClassProb(kind="constant", value=pi_A, pi_A=pi_A)
        return NullClassProb(kind="constant", value=pi_A * p_A0 / p0, pi_A=pi_A)
    if kind == "parametric":
        if nulls is None or nulls[0] is None or nulls[1] is None:
            raise DataError("parametric null class probability needs both class nulls")
        return NullClassProb(kind="parametric", pi_A=pi_A, null_A=nulls[0], null_B=nulls[1])
    if kind == "plug_in_at_zero":
        if curve is None:
            raise DataError("plug-in null class probability needs a fitted class curve")
        return NullClassProb(kind="plug_in_at_zero", value=float(curve.pi(0.0)[0]), pi_A=pi_A)
    raise ValueError(f"unknown null class probability kind {kind!r}")


def sd_log_fdrA(
    fdr: FdrCurve, pa: ClassProbCurve, grid=None, correction: str = "none",
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Delta-method standard deviations of log fdr, log R_A and log fdr_A.

    log fdr and log R_A are treated as uncorrelated, so the variances add. The
    log fdr term covers the density fit only; null-parameter uncertainty is not
    included. ``pi_A0`` is treated as fixed except under ``plug_in_zero``, where
    it is ``pi_A(0)`` from the same logistic fit.
    """
    grid = fdr.grid if grid is None else np.atleast_1d(np.asarray(grid, dtype=float))
    sd_fdr = fdr.density.sd_log_pdf(grid)
    p = pa.pi(grid)
    G = -(1 - p)[:, None] * pa.design(grid)
    if correction == "plug_in_zero":
        p_zero = pa.pi(0.0)[0]
        G = G + (1 - p_zero) * pa.design(0.0)
    var_R = np.einsum("ij,jk,ik->i", G, pa.coef_covariance, G)
    sd_R = np.sqrt(np.maximum(var_R, 0.0))
    return sd_fdr, sd_R, np.sqrt(sd_fdr**2 + sd_R**2)


@dataclass(frozen=True, eq=False)
class SubclassFdrReport:
    grid: np.ndarray
    fdr_combined: np.ndarray
    pi_A: np.ndarray
    pi_A0: np.ndarray
    R_A: np.ndarray
    fdr_A: np.ndarray
    sd_log_fdr_combined: np.ndarray
    sd_log_R_A: np.ndarray
    sd_log_fdr_A: np.ndarray
    correction: str = "none"
    p_A0_hat: float | None = None
    correction_factor: float = 1.0
    floored: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    curve: ClassProbCurve | None = None
    null_class: NullClassProb | None = None
    fdr: FdrCurve | None = None

    def fdr_A_at(self, z) -> np.ndarray:
        """Class-A local fdr at arbitrary z (same estimator as the grid values)."""
        return _fdr_A(self.fdr, self.curve, self.null_class, z, self.correction,
                      self.correction_factor)[0]


def _fdr_A(fdr, pa, pa0, z, correction, factor=1.0):
    z = np.atleast_1d(np.asarray(z, dtype=float))
    pi_hat = pa.pi(z)
    floored = pi_hat < PI_FLOOR
    pi_hat = np.maximum(pi_hat, PI_FLOOR)
    if correction == "plug_in_zero":
        pi0 = np.full(z.shape, float(pa.pi(0.0)[0]))
    else:
        pi0 = pa0(z)
    R = pi0 / pi_hat
    return np.minimum(1.0, fdr.fdr_at(z) * R * factor), pi_hat, pi0, R, floored


def subclass_fdr_curve(
    fdr: FdrCurve,
    pa: ClassProbCurve,
    pa0: NullClassProb,
    correction: str = "none",
    z_A=None,
    grid=None,
) -> SubclassFdrReport:
    """Class-A local fdr via ``fdr_A(z) = fdr(z) pi_A0(z) / pi_A(z)``.

    ``correction="plug_in_zero"`` replaces pi_A0 by the fitted ``pi_A(0)``.
    ``correction="pA0_hat"`` estimates ``p_A0`` as the mean of the uncorrected
    ``fdr_A`` over the class-A z-values ``z_A`` and multiplies by ``p_A0 / p0``.
    """
    if correction not in CORRECTIONS:
        raise ValueError(f"correction must be one of {CORRECTIONS}")
    grid = fdr.grid if grid is None else np.atleast_1d(np.asarray(grid, dtype=float))
    fdr_A, pi_hat, pi0, R, floored = _fdr_A(fdr, pa, pa0, grid, correction)
    p_A0_hat = None
    factor = 1.0
    if correction == "pA0_hat":
        if z_A is None or len(z_A) == 0:
            raise DataError("pA0_hat correction needs the class-A z-values")
        p_A0_hat = float(np.mean(_fdr_A(fdr, pa, pa0, z_A, "none")[0]))
        factor = p_A0_hat / fdr.null.p0
        R = R * factor
        fdr_A = np.minimum(1.0, fdr.fdr_at(grid) * R)
    elif z_A is not None and len(z_A) > 0:
        p_A0_hat = float(np.mean(_fdr_A(fdr, pa, pa0, z_A, correction)[0]))
    sd_fdr, sd_R, sd_A = sd_log_fdrA(fdr, pa, grid, correction)
    return SubclassFdrReport(
        grid=grid, fdr_combined=fdr.fdr_at(grid), pi_A=pi_hat, pi_A0=pi0, R_A=R,
        fdr_A=fdr_A, sd_log_fdr_combined=sd_fdr, sd_log_R_A=sd_R, sd_log_fdr_A=sd_A,
        correction=correction, p_A0_hat=p_A0_hat, correction_factor=factor,
        floored=floored, curve=pa, null_class=pa0, fdr=fdr,
    )


@dataclass(frozen=True)
class TailReport:
    z: np.ndarray
    direction: str
    Fdr: np.ndarray
    R_A: np.ndarray
    Fdr_A: np.ndarray
    pi_A0_tail: np.ndarray
    pi_A_tail: np.ndarray


def _tail_mask(z, threshold, direction):
    return z <= threshold if direction == "left" else z >= threshold


def empirical_tail_fdr(z_eval, z, null: NullEstimate, direction: str = "left",
                       p0: float | None = None) -> np.ndarray:
    """Fdr-bar(z) = p0 F0(z) / F-bar(z) with the empirical cdf in the denominator."""
    z = np.asarray(z, dtype=float)
    z_eval = np.atleast_1d(np.asarray(z_eval, dtype=float))
    p0 = null.p0 if p0 is None else p0
    out = np.empty(z_eval.shape)
    for i, t in enumerate(z_eval):
        n_tail = np.count_nonzero(_tail_mask(z, t, direction))
        if n_tail == 0:
            raise DataError("empty tail")
        tail0 = null.cdf(t) if direction == "left" else null.sf(t)
        out[i] = p0 * tail0 * z.size / n_tail
    return out


def subclass_tail_fdr(
    z_eval,
    z: np.ndarray,
    in_A: np.ndarray,
    pa0: NullClassProb,
    direction: str = "left",
    fdr: FdrCurve | None = None,
    null: NullEstimate | None = None,
) -> TailReport:
    """Class-A tail Fdr as ``Fdr(z) R_A(z)`` with tail class probabilities.

    ``R_A(z)`` is the null class-A probability of the tail over the observed
    class-A fraction of the tail. The combined Fdr comes from ``fdr`` when given
    and otherwise is the empirical Fdr-bar under ``null`` (theoretical by default).
    """
    z = np.asarray(z, dtype=float)
    in_A = np.asarray(in_A, dtype=bool)
    z_eval = np.atleast_1d(np.asarray(z_eval, dtype=float))
    obs = np.empty(z_eval.shape)
    for i, t in enumerate(z_eval):
        tail = _tail_mask(z, t, direction)
        n_tail = np.count_nonzero(tail)
        n_A = np.count_nonzero(tail & in_A)
        if n_tail == 0 or n_A == 0:
            raise DataError("empty tail")
        obs[i] = n_A / n_tail
    if fdr is not None:
        Fdr = fdr.Fdr_at(z_eval, direction)
    else:
        Fdr = empirical_tail_fdr(z_eval, z, null or NullEstimate(), direction)
    pi0 = pa0.tail(z_eval, direction)
    R = pi0 / obs
    return TailReport(z=z_eval, direction=direction, Fdr=Fdr, R_A=R, Fdr_A=Fdr * R,
                      pi_A0_tail=pi0, pi_A_tail=obs)


@dataclass(frozen=True)
class RelevanceResult:
    z: float
    Fdr: float
    R: float
    Fdr_i: float


def _null_tail_masses(ds: Dataset, null, t: float, direction: str) -> np.ndarray:
    if isinstance(null, NullEstimate):
        nulls = [null]
    else:
        nulls = list(null)
        if len(nulls) != ds.N:
            raise DataError("need one null estimate per case")
    p0 = np.array([n.p0 for n in nulls])
    mu = np.array([n.delta0 for n in nulls])
    sd = np.array([n.sigma0 for n in nulls])
    tail = stats.norm.cdf(t, mu, sd) if direction == "left" else stats.norm.sf(t, mu, sd)
    return np.broadcast_to(p0 * tail, (ds.N,))


def relevance_components(
    ds: Dataset, focal: int | str, rho: RelevanceFunction,
    null: NullEstimate | Sequence[NullEstimate] | None = None,
    z: float | None = None, direction: str = "left",
) -> RelevanceResult:
    """Relevance-weighted tail Fdr for one focal case.

    ``Fdr_i(z) = Fdr-bar(z) * R_i(z)`` with ``Fdr-bar(z) = sum_j p_j0 F_j0(z) / N(z)``
    and ``R_i(z)`` the relevance-weighted share of expected null tail mass over
    the relevance-weighted share of observed tail cases.
    """
    i = ds.index_of(focal) if isinstance(focal, str) else int(focal)
    null = NullEstimate() if null is None else null
    t = float(ds.z[i]) if z is None else float(z)
    w = rho.weights(ds, i)
    tail = _tail_mask(ds.z, t, direction)
    n_tail = np.count_nonzero(tail)
    if n_tail == 0:
        raise DataError("N(z) = 0: empty tail")
    w_tail = w[tail].sum()
    if w_tail <= 0:
        raise DataError("zero relevance mass in tail")
    m = _null_tail_masses(ds, null, t, direction)
    Fdr = m.sum() / n_tail
    R = (np.dot(w, m) / m.sum()) / (w_tail / n_tail)
    return RelevanceResult(z=t, Fdr=float(Fdr), R=float(R), Fdr_i=float(Fdr * R))


def relevance_weighted_fdr(
    ds: Dataset, focal: int | str, rho: RelevanceFunction,
    null: NullEstimate | Sequence[NullEstimate] | None = None,
    z: float | None = None, direction: str = "left",
) -> float:
    return relevance_components(ds, focal, rho, null, z, direction).Fdr_i


@dataclass(frozen=True)
class FlatnessReport:
    max_abs_logit_slope: float
    mean_slope: float
    se_mean_slope: float
    flat: bool
    window: tuple[float, float]


def null_flatness_diagnostic(
    pa: ClassProbCurve, window: tuple[float, float] = (-1.0, 1.0), n_grid: int = 201,
) -> FlatnessReport:
    """Check that logit pi_A(z) is flat near zero.

    Reports the largest absolute logit slope over ``window``. The curve is called
    flat when the average slope across the window, ``(logit(hi) - logit(lo)) /
    (hi - lo)``, is within two standard errors of zero.
    """
    lo, hi = window
    if not lo < hi:
        raise ValueError("window must satisfy lo < hi")
    g = np.linspace(lo, hi, n_grid)
    max_slope = float(np.max(np.abs(pa.logit_slope(g))))
    grad = (pa.design(hi) - pa.design(lo))[0] / (hi - lo)
    mean_slope = float(grad @ pa.coefficients)
    se = float(np.sqrt(max(grad @ pa.coef_covariance @ grad, 0.0)))
    flat = abs(mean_slope) <= 2.0 * se or mean_slope == 0.0
    return FlatnessReport(max_abs_logit_slope=max_slope, mean_slope=mean_slope,
                          se_mean_slope=se, flat=bool(flat), window=(lo, hi))
