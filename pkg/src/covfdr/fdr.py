"""Combined-analysis false discovery rates: local fdr, tail Fdr, BH and Bonferroni rules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DataError, Dataset
from .density import DensityFit, NullEstimate

DIRECTIONS = ("left", "right", "two_sided")


@dataclass(frozen=True, eq=False)
class FdrCurve:
    """Local and tail false discovery rates on a regular z grid.

    Tail rates are Riemann sums of ``p0 f0`` and ``f`` over the grid, so the tail
    Fdr is exactly the ``f``-weighted average of the uncapped local fdr over the
    tail.
    """

    grid: np.ndarray
    fdr: np.ndarray
    fdr_uncapped: np.ndarray
    Fdr_left: np.ndarray
    Fdr_right: np.ndarray
    null: NullEstimate
    density: DensityFit

    def fdr_at(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        return np.minimum(1.0, self.null.p0 * self.null.pdf(z) / self.density.pdf(z))

    def log_fdr_at(self, z) -> np.ndarray:
        return np.log(self.fdr_at(z))

    def Fdr_at(self, z, direction: str = "right") -> np.ndarray:
        """Tail Fdr interpolated from the grid."""
        values = self.Fdr_left if direction == "left" else self.Fdr_right
        return np.interp(np.atleast_1d(z), self.grid, values)


def local_fdr_curve(null: NullEstimate, density: DensityFit, grid=None) -> FdrCurve:
    """``fdr(z) = min(1, p0 f0(z) / f(z))`` plus left and right tail Fdr.

    ``grid`` defaults to the density's bin midpoints and should be evenly spaced.
    """
    grid = density.spec.midpoints if grid is None else np.asarray(grid, dtype=float)
    f = density.pdf(grid)
    if np.any(f <= 0):
        raise ValueError("density must be positive on the grid")
    num = null.p0 * null.pdf(grid)
    raw = num / f
    Fdr_left = np.minimum(1.0, np.cumsum(num) / np.cumsum(f))
    Fdr_right = np.minimum(1.0, np.cumsum(num[::-1])[::-1] / np.cumsum(f[::-1])[::-1])
    return FdrCurve(
        grid=grid, fdr=np.minimum(1.0, raw), fdr_uncapped=raw,
        Fdr_left=Fdr_left, Fdr_right=Fdr_right, null=null, density=density,
    )


@dataclass(frozen=True)
class RejectionSet:
    rule: str
    level: float
    direction: str
    threshold_z: float | None
    threshold_p: float | None
    rejected: np.ndarray
    rejected_ids: tuple[str, ...] = ()

    @property
    def n_rejected(self) -> int:
        return int(np.count_nonzero(self.rejected))


def null_pvalues(z, null: NullEstimate, direction: str = "two_sided") -> np.ndarray:
    """Null tail probabilities; ``two_sided`` folds F0 symmetrically about delta0."""
    z = np.asarray(z, dtype=float)
    if direction == "left":
        return null.cdf(z)
    if direction == "right":
        return null.sf(z)
    if direction == "two_sided":
        return np.minimum(1.0, 2.0 * null.sf(null.delta0 + np.abs(z - null.delta0)))
    raise ValueError(f"direction must be one of {DIRECTIONS}")


def bh_reject_pvalues(pvalues, q: float, p0: float = 1.0) -> np.ndarray:
    """Benjamini-Hochberg step-up: boolean rejection mask.

    Rejects the k smallest p-values, k the largest rank with
    ``p0 * p_(k) <= k q / N``.
    """
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    p = np.asarray(pvalues, dtype=float)
    N = p.size
    order = np.argsort(p, kind="stable")
    ok = p0 * p[order] <= q * np.arange(1, N + 1) / N
    mask = np.zeros(N, dtype=bool)
    if ok.any():
        k = np.flatnonzero(ok)[-1] + 1
        mask[order[:k]] = True
    return mask


def bh_reject(
    ds: Dataset, null: NullEstimate, q: float, direction: str = "two_sided",
    p0: float | None = None,
) -> RejectionSet:
    """BH rule on z-values: reject cases beyond the most extreme z with Fdr-bar <= q.

    ``p0`` defaults to 1 for the theoretical null and to ``null.p0`` otherwise.
    """
    if p0 is None:
        p0 = 1.0 if null.source == "theoretical" else null.p0
    p = null_pvalues(ds.z, null, direction)
    mask = bh_reject_pvalues(p, q, p0)
    thr_z = thr_p = None
    if mask.any():
        thr_p = float(p[mask].max())
        zr = ds.z[mask]
        if direction == "left":
            thr_z = float(zr.max())
        elif direction == "right":
            thr_z = float(zr.min())
        else:
            thr_z = float(np.abs(zr - null.delta0).min())
    return RejectionSet(
        rule=f"BH({q})", level=q, direction=direction, threshold_z=thr_z,
        threshold_p=thr_p, rejected=mask, rejected_ids=tuple(ds.ids[mask].tolist()),
    )


def bonferroni_reject(pvalues, alpha: float = 0.05) -> RejectionSet:
    p = np.asarray(pvalues, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    thr = alpha / p.size
    mask = p <= thr
    return RejectionSet(
        rule=f"Bonferroni({alpha})", level=alpha, direction="p", threshold_z=None,
        threshold_p=thr, rejected=mask,
    )


def false_discovery_proportion(rejected: RejectionSet | np.ndarray, ds: Dataset) -> float:
    """Fraction of rejected cases that are truly null; 0 when nothing is rejected."""
    mask = rejected.rejected if isinstance(rejected, RejectionSet) else np.asarray(rejected, bool)
    if not mask.any():
        return 0.0
    if ds.is_null is None:
        raise DataError("missing truth labels")
    truth = ds.is_null[mask]
    if np.any(np.isnan(truth)):
        raise DataError("missing truth labels")
    return float(truth.sum() / truth.size)


@dataclass(frozen=True)
class AccuracyReport:
    z: float | None
    N: int
    F_z: float
    d: float
    c: float
    mean_D: float
    var_D: float
    CV: float
    CV_first_order: float

    @property
    def e(self) -> float:
        return self.N * self.F_z


def fdrbar_accuracy(N: int, F_z: float, z: float | None = None) -> AccuracyReport:
    """Bias and variability of ``D = Fdr-bar(z) / Fdr(z)`` for independent z-values.

    ``E{D} ~ 1 + d - d^2 c``, ``var{D} ~ d - d^2 (6c - 1)`` and
    ``CV ~ d^(1/2) [1 - d (3c - 1/2)]`` with ``d = (1 - F)/(N F)`` and
    ``c = (1 - 2F)/(1 - F)``.
    """
    if not 0 < F_z < 1:
        raise ValueError("F_z must lie strictly between 0 and 1")
    if N < 1:
        raise ValueError("N must be positive")
    d = (1 - F_z) / (N * F_z)
    c = (1 - 2 * F_z) / (1 - F_z)
    return AccuracyReport(
        z=z, N=N, F_z=F_z, d=d, c=c,
        mean_D=1 + d - d * d * c,
        var_D=d - d * d * (6 * c - 1),
        CV=np.sqrt(d) * (1 - d * (3 * c - 0.5)),
        CV_first_order=np.sqrt(d),
    )


def fdrbar_exact_moments(N: int, F_z: float) -> tuple[float, float, float]:
    """Exact mean, variance and CV of ``D = N F_z / N(z)`` given ``N(z) > 0``.

    ``N(z)`` is Binomial(N, F_z). Useful as a check on the series expansions in
    :func:`fdrbar_accuracy`, whose second-order terms are only approximate.
    """
    from scipy import stats

    x = np.arange(1, N + 1)
    p = stats.binom.pmf(x, N, F_z)
    p = p / p.sum()
    D = N * F_z / x
    mean = float(p @ D)
    var = float(p @ D**2 - mean**2)
    return mean, var, float(np.sqrt(var) / mean)
