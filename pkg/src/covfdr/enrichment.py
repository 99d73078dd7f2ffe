"""Enrichment of a pre-identified case set: logistic slope test and within-set fdr."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .core import DataError, Dataset
from .density import BinSpec, bin_counts
from .fdr import FdrCurve, bh_reject_pvalues
from .separate import (
    fit_class_prob_curve, fit_unbinned_class_curve, null_class_prob_curve, subclass_fdr_curve,
)

MIN_SET_SIZE = 5


@dataclass(frozen=True)
class EnrichmentResult:
    set_label: str
    N_A: int
    S: float
    p_two_sided: float
    slope: float
    se: float
    S_pos: float | None = None
    S_neg: float | None = None
    penalized: bool = False
    per_case_fdrA: dict[str, float] = field(default_factory=dict)
    n_below_threshold: int | None = None
    threshold: float = 0.10

    def as_dict(self) -> dict:
        return {
            "set_label": self.set_label, "N_A": self.N_A, "S": self.S,
            "p_two_sided": self.p_two_sided, "slope": self.slope, "se": self.se,
            "S_pos": self.S_pos, "S_neg": self.S_neg, "penalized": self.penalized,
            "n_below_threshold": self.n_below_threshold, "threshold": self.threshold,
        }


def _membership(ds: Dataset, members) -> tuple[str, np.ndarray]:
    """Resolve a set given as a class label, a boolean mask or a collection of ids."""
    if isinstance(members, str):
        if ds.labels is None:
            raise DataError("dataset has no class labels")
        return members, np.asarray(ds.labels == members, dtype=bool)
    arr = np.asarray(members)
    if arr.dtype == bool:
        if arr.shape != (ds.N,):
            raise DataError("membership mask has the wrong length")
        return "set", arr
    wanted = set(map(str, members))
    mask = np.isin(ds.ids.astype(str), list(wanted))
    return "set", mask


def _slope_stat(z: np.ndarray, in_set: np.ndarray) -> tuple[float, float, bool]:
    curve, _ = fit_unbinned_class_curve(z, in_set, basis="linear")
    beta = float(curve.coefficients[1])
    se = float(np.sqrt(curve.coef_covariance[1, 1]))
    return beta, se, curve.penalized


def _side_stat(z, in_set, keep) -> float | None:
    z, m = z[keep], in_set[keep]
    if m.sum() < 2 or (~m).sum() < 2:
        return None
    beta, se, _ = _slope_stat(z, m)
    return beta / se


def enrichment_slope_test(
    ds: Dataset, members, side_split: bool = False, set_label: str | None = None,
) -> EnrichmentResult:
    """Test whether set membership varies with z.

    Fits ``logit Prob{A | z} = b0 + b1 z`` by per-case logistic regression and
    returns ``S = b1 / se(b1)`` with a two-sided normal p-value. ``members`` is
    a class label, a boolean mask, or a collection of case ids. With
    ``side_split`` the statistic is also computed on ``z < 0`` and ``z > 0``
    separately.
    """
    label, in_set = _membership(ds, members)
    label = set_label or label
    n_A = int(in_set.sum())
    if n_A < MIN_SET_SIZE:
        raise DataError(f"set {label!r} has {n_A} members; need at least {MIN_SET_SIZE}")
    if n_A == ds.N:
        raise DataError("set complement is empty")
    beta, se, penalized = _slope_stat(ds.z, in_set)
    S = beta / se
    out = EnrichmentResult(
        set_label=label, N_A=n_A, S=float(S), p_two_sided=float(2 * stats.norm.sf(abs(S))),
        slope=beta, se=se, penalized=penalized,
    )
    if side_split:
        out = replace(out, S_pos=_side_stat(ds.z, in_set, ds.z > 0),
                      S_neg=_side_stat(ds.z, in_set, ds.z < 0))
    return out


def enrichment_fdr_report(
    ds: Dataset, members, fdr: FdrCurve, threshold: float = 0.10,
    basis: str = "cubic", side_split: bool = False, set_label: str | None = None,
) -> EnrichmentResult:
    """Slope test plus per-member ``fdr_A(z_i) = fdr(z_i) pi_A / pi_A(z_i)``.

    The class curve is the binned logistic fit on the bins of ``fdr``'s density,
    and ``pi_A0`` is held at the set's share ``pi_A``. When the set is the
    whole dataset, ``fdr_A`` is the combined fdr.
    """
    label, in_set = _membership(ds, members)
    label = set_label or label
    n_A = int(in_set.sum())
    if n_A == 0:
        raise DataError(f"set {label!r} has no members")
    if n_A == ds.N:
        values = fdr.fdr_at(ds.z)
        res = EnrichmentResult(set_label=label, N_A=n_A, S=float("nan"),
                               p_two_sided=float("nan"), slope=float("nan"), se=float("nan"))
    else:
        res = enrichment_slope_test(ds, in_set, side_split, label)
        spec: BinSpec = fdr.density.spec
        bc = bin_counts(ds.z, spec, in_class=in_set)
        pa = fit_class_prob_curve(bc, basis)
        pa0 = null_class_prob_curve(n_A / ds.N)
        report = subclass_fdr_curve(fdr, pa, pa0, "none")
        values = report.fdr_A_at(ds.z[in_set])
    ids = ds.ids[in_set].astype(str)
    per_case = {i: float(v) for i, v in zip(ids, values)}
    return replace(res, per_case_fdrA=per_case, threshold=threshold,
                   n_below_threshold=int(np.count_nonzero(values < threshold)))


def bh_across_sets(results: list[EnrichmentResult], q: float = 0.1) -> dict[str, bool]:
    """Optional Benjamini-Hochberg pass over the sets' two-sided p-values."""
    if not results:
        return {}
    p = np.array([r.p_two_sided for r in results])
    mask = bh_reject_pvalues(p, q)
    return {r.set_label: bool(m) for r, m in zip(results, mask)}
