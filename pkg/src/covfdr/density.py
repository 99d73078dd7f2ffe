"""Mixture density estimation by binned Poisson regression and normal null estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre
from scipy import optimize, stats

from .core import DataError, Dataset, FitError
from .glm import GLMResult, poisson_irls


@dataclass(frozen=True)
class BinSpec:
    lo: float
    hi: float
    K: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("bin range must satisfy lo < hi")
        if self.K < 10:
            raise ValueError("need at least 10 bins")

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.K

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.K + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return self.lo + self.width * (np.arange(self.K) + 0.5)

    @classmethod
    def for_data(cls, z: np.ndarray, width: float = 0.2, min_bins: int = 42) -> "BinSpec":
        lo = float(np.min(z)) - 0.1
        hi = float(np.max(z)) + 0.1
        K = max(min_bins, math.ceil((hi - lo) / width))
        return cls(lo, hi, K)


@dataclass(frozen=True)
class BinnedCounts:
    spec: BinSpec
    N_k: np.ndarray
    N_Ak: np.ndarray | None = None

    @property
    def N(self) -> int:
        return int(self.N_k.sum())

    @property
    def r_Ak(self) -> np.ndarray | None:
        if self.N_Ak is None:
            return None
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.N_k > 0, self.N_Ak / np.maximum(self.N_k, 1), np.nan)


def bin_counts(
    ds: Dataset | np.ndarray, spec: BinSpec, class_label: str | None = None,
    in_class: np.ndarray | None = None,
) -> BinnedCounts:
    """Count z-values per bin, optionally with class-A counts.

    Class membership is given either by ``class_label`` (matched against the
    dataset labels) or directly by the boolean mask ``in_class``.
    """
    z = ds.z if isinstance(ds, Dataset) else np.asarray(ds, dtype=float)
    if np.any(z < spec.lo) or np.any(z > spec.hi):
        raise DataError("z outside range")
    idx = np.minimum(((z - spec.lo) / spec.width).astype(int), spec.K - 1)
    N_k = np.bincount(idx, minlength=spec.K)
    if class_label is not None:
        if not isinstance(ds, Dataset) or ds.labels is None:
            raise DataError("class counts need a labelled dataset")
        in_class = ds.labels == class_label
    N_Ak = None
    if in_class is not None:
        N_Ak = np.bincount(idx[np.asarray(in_class, dtype=bool)], minlength=spec.K)
    return BinnedCounts(spec=spec, N_k=N_k, N_Ak=N_Ak)


def _legendre_design(z: np.ndarray, spec: BinSpec, degree: int) -> np.ndarray:
    u = (2.0 * np.asarray(z, dtype=float) - (spec.lo + spec.hi)) / (spec.hi - spec.lo)
    return legendre.legvander(u, degree)


@dataclass(frozen=True)
class DensityFit:
    """Poisson-GLM fit of bin counts; ``f(z)`` integrates to one over the bin grid."""

    spec: BinSpec
    degree: int
    glm: GLMResult
    counts: np.ndarray

    @property
    def coefficients(self) -> np.ndarray:
        return self.glm.coef

    @property
    def fitted_counts(self) -> np.ndarray:
        return self.glm.fitted

    @property
    def _norm(self) -> float:
        return float(self.glm.fitted.sum() * self.spec.width)

    def design(self, z) -> np.ndarray:
        return _legendre_design(np.atleast_1d(z), self.spec, self.degree)

    def log_pdf(self, z) -> np.ndarray:
        return self.design(z) @ self.glm.coef - np.log(self._norm)

    def pdf(self, z) -> np.ndarray:
        return np.exp(self.log_pdf(z))

    def cdf(self, z) -> np.ndarray:
        """Mixture cdf from cumulative sums of the fitted bin masses, linear within bins."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        mass = self.glm.fitted / self.glm.fitted.sum()
        cum = np.concatenate([[0.0], np.cumsum(mass)])
        return np.interp(z, self.spec.edges, cum)

    def log_pdf_gradient(self, z) -> np.ndarray:
        """Gradient of log f(z) with respect to the GLM coefficients (rows = z)."""
        mu = self.glm.fitted
        Xk = self.design(self.spec.midpoints)
        mean_x = (mu @ Xk) / mu.sum()
        return self.design(z) - mean_x

    def sd_log_pdf(self, z) -> np.ndarray:
        """Delta-method standard deviation of log f(z) from the Poisson information."""
        G = self.log_pdf_gradient(z)
        var = np.einsum("ij,jk,ik->i", G, self.glm.cov, G)
        return np.sqrt(np.maximum(var, 0.0))


def fit_mixture_density(bc: BinnedCounts, degree: int = 7) -> DensityFit:
    """Fit a degree-``degree`` log-polynomial density to binned counts (Lindsey's method)."""
    if degree < 2:
        raise ValueError("degree must be >= 2")
    y = np.asarray(bc.N_k, dtype=float)
    if y.sum() < 100:
        raise DataError("need at least 100 observations to fit a density")
    if np.count_nonzero(y) < 2:
        raise FitError("degenerate design")
    X = _legendre_design(bc.spec.midpoints, bc.spec, degree)
    res = poisson_irls(X, y, tol=1e-8, max_iter=100)
    return DensityFit(spec=bc.spec, degree=degree, glm=res, counts=y)


@dataclass(frozen=True)
class NullEstimate:
    delta0: float = 0.0
    sigma0: float = 1.0
    p0: float = 1.0
    source: str = "theoretical"

    def __post_init__(self):
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if not 0 < self.p0 <= 1:
            raise ValueError("p0 must lie in (0, 1]")
        if self.source not in ("theoretical", "empirical_mle"):
            raise ValueError(f"unknown null source {self.source!r}")
        if self.source == "theoretical" and (self.delta0 != 0.0 or self.sigma0 != 1.0):
            raise ValueError("theoretical null is N(0, 1)")

    def pdf(self, z) -> np.ndarray:
        return stats.norm.pdf(np.asarray(z, dtype=float), self.delta0, self.sigma0)

    def cdf(self, z) -> np.ndarray:
        return stats.norm.cdf(np.asarray(z, dtype=float), self.delta0, self.sigma0)

    def sf(self, z) -> np.ndarray:
        return stats.norm.sf(np.asarray(z, dtype=float), self.delta0, self.sigma0)

    def as_dict(self) -> dict:
        return {"delta0": self.delta0, "sigma0": self.sigma0, "p0": self.p0, "source": self.source}


def null_density_eval(ne: NullEstimate, z: float) -> tuple[float, float]:
    """Return ``(f0(z), F0(z))`` for the normal null."""
    return float(ne.pdf(z)), float(ne.cdf(z))


def theoretical_null(z: np.ndarray | None = None, central_fraction: float = 0.5) -> NullEstimate:
    """The N(0, 1) null.

    With data ``z``, p0 is estimated from the count inside the central
    ``central_fraction`` of the N(0, 1) distribution (clamped to 1); without data
    p0 = 1.
    """
    if z is None:
        return NullEstimate()
    z = np.asarray(z, dtype=float)
    half = stats.norm.ppf(0.5 + central_fraction / 2)
    inside = np.count_nonzero(np.abs(z) <= half)
    p0 = min(1.0, inside / (z.size * central_fraction))
    return NullEstimate(p0=max(p0, 1e-12))


def _truncated_loglik(z_in, n_in, n_total, a, b, delta, sigma):
    Q = stats.norm.cdf(b, delta, sigma) - stats.norm.cdf(a, delta, sigma)
    if not Q > 0:
        return -np.inf, np.nan
    ll = np.sum(stats.norm.logpdf(z_in, delta, sigma)) - n_in * np.log(Q)
    # profile p0: the binomial count inside the window is maximized at p0*Q = n_in/N,
    # subject to p0 <= 1
    theta = min(n_in / n_total, Q)
    p0 = theta / Q
    ll += n_in * np.log(theta)
    if n_total > n_in:
        ll += (n_total - n_in) * np.log1p(-theta) if theta < 1 else -np.inf
    return ll, p0


def fit_empirical_null(
    z: Dataset | np.ndarray, central_fraction: float = 0.8, min_size: int = 200
) -> NullEstimate:
    """Maximum-likelihood normal null fitted to the central part of the z-values.

    The z-values between the ``(1 - central_fraction)/2`` and
    ``(1 + central_fraction)/2`` sample quantiles are treated as null draws from a
    truncated N(delta0, sigma0^2); the count inside the window is binomial with
    success probability ``p0 * Q(delta0, sigma0)``. Nelder-Mead runs over
    ``(delta0, log sigma0)`` with p0 profiled out, which lets p0 reach its
    boundary value 1 exactly.
    """
    z = z.z if isinstance(z, Dataset) else np.asarray(z, dtype=float)
    if z.size < min_size:
        raise DataError(
            f"empirical null needs at least {min_size} cases (got {z.size}); "
            "use the subclass route instead"
        )
    if not 0 < central_fraction < 1:
        raise ValueError("central_fraction must lie in (0, 1)")
    a, b = np.quantile(z, [(1 - central_fraction) / 2, (1 + central_fraction) / 2])
    z_in = z[(z >= a) & (z <= b)]
    n_in = z_in.size
    if n_in < 10 or not b > a:
        raise FitError("central window holds too few distinct values")

    def objective(par):
        ll, _ = _truncated_loglik(z_in, n_in, z.size, a, b, par[0], np.exp(par[1]))
        return -ll if np.isfinite(ll) else 1e300

    q25, q50, q75 = np.quantile(z, [0.25, 0.5, 0.75])
    start = np.array([q50, np.log((q75 - q25) / 1.349)])
    res = optimize.minimize(
        objective, start, method="Nelder-Mead",
        options={"xatol": 1e-9, "fatol": 1e-9, "maxiter": 4000, "maxfev": 8000},
    )
    if not res.success:
        raise FitError(f"empirical null optimizer failed: {res.message}")
    delta, sigma = float(res.x[0]), float(np.exp(res.x[1]))
    if not sigma > 0 or not np.isfinite(sigma):
        raise FitError("sigma0 estimate is not positive")
    _, p0 = _truncated_loglik(z_in, n_in, z.size, a, b, delta, sigma)
    return NullEstimate(delta0=delta, sigma0=sigma, p0=float(min(1.0, p0)), source="empirical_mle")
