import numpy as np
import pytest
from scipy import stats

from covfdr import DataError, Dataset
from covfdr.density import NullEstimate, theoretical_null
from covfdr.fdr import (
    bh_reject, bh_reject_pvalues, bonferroni_reject, false_discovery_proportion, fdrbar_accuracy,
    fdrbar_exact_moments, local_fdr_curve, null_pvalues,
)

from conftest import ExactDensity
from oracles import (
    ACC_1000_C, ACC_1000_CV, ACC_1000_CV1, ACC_1000_D, EXACT_D_CV, EXACT_D_MEAN, MIX_FDR_25,
    MIX_FDR_TAIL_25,
)


def _exact_mixture_curve(step=0.001):
    grid = np.round(np.arange(-10, 12 + step / 2, step), 10)
    f = ExactDensity(lambda z: 0.9 * stats.norm.pdf(z) + 0.1 * stats.norm.pdf(z - 2.5))
    null = NullEstimate(p0=0.9, source="theoretical")
    return local_fdr_curve(null, f, grid)


def test_local_fdr_oracle():
    curve = _exact_mixture_curve()
    assert curve.fdr_at(2.5)[0] == pytest.approx(MIX_FDR_25, abs=5e-5)


def test_tail_fdr_oracle():
    curve = _exact_mixture_curve()
    # Riemann-sum tails converge to the integral at the grid step
    assert curve.Fdr_at(2.5, "right")[0] == pytest.approx(MIX_FDR_TAIL_25, abs=2e-4)


def test_null_only_data_gives_fdr_one():
    f = ExactDensity(stats.norm.pdf)
    curve = local_fdr_curve(NullEstimate(), f, np.linspace(-3, 3, 61))
    np.testing.assert_allclose(curve.fdr, 1.0)
    np.testing.assert_allclose(curve.Fdr_left, 1.0)


def test_fitted_fdr_ranges(mixture_fit):
    assert np.all(mixture_fit.fdr > 0) and np.all(mixture_fit.fdr <= 1)
    for tail in (mixture_fit.Fdr_left, mixture_fit.Fdr_right):
        assert np.all(tail > 0) and np.all(tail <= 1)
    central = np.abs(mixture_fit.grid) < 1
    assert np.all(mixture_fit.fdr[central] > 0.9)


def test_tail_is_weighted_mean_of_local(mixture_fit):
    f = mixture_fit.density.pdf(mixture_fit.grid)
    w = np.cumsum(f * mixture_fit.fdr_uncapped)[20] / np.cumsum(f)[20]
    assert mixture_fit.Fdr_left[20] == pytest.approx(min(1.0, w), rel=1e-12)


def test_bh_example():
    mask = bh_reject_pvalues([0.001, 0.02, 0.03, 0.5], 0.1)
    assert mask.tolist() == [True, True, True, False]


def test_bh_all_ones():
    assert not bh_reject_pvalues(np.ones(10), 0.1).any()


def test_bh_step_up_not_step_down():
    # 0.04 fails its own bound 1*q/N but is rescued by a later rank
    mask = bh_reject_pvalues([0.04, 0.045, 0.9], 0.1)
    assert mask.tolist() == [True, True, False]


def test_bh_reject_threshold_is_extreme_z(mixture_data):
    rs = bh_reject(mixture_data, theoretical_null(), 0.1, "right")
    z = mixture_data.z
    assert rs.n_rejected > 0
    assert set(np.flatnonzero(rs.rejected)) == set(np.flatnonzero(z >= rs.threshold_z))
    # Fdr-bar at the threshold is within q, one step below it is not
    N = z.size
    fbar = lambda t: N * stats.norm.sf(t) / np.count_nonzero(z >= t)  # noqa: E731
    assert fbar(rs.threshold_z) <= 0.1
    below = np.max(z[z < rs.threshold_z])
    assert fbar(below) > 0.1


def test_bh_left_direction():
    ds = Dataset.from_arrays([-5.0, -4.5, 0.0, 0.3, 1.0])
    rs = bh_reject(ds, theoretical_null(), 0.1, "left")
    assert rs.rejected.tolist() == [True, True, False, False, False]
    assert rs.threshold_z == -4.5


def test_bonferroni_example():
    p = np.concatenate([[0.0004, 0.0006, 0.1], np.full(97, 0.5)])
    rs = bonferroni_reject(p, 0.05)
    assert rs.threshold_p == pytest.approx(0.0005)
    assert np.flatnonzero(rs.rejected).tolist() == [0]


def test_bonferroni_single_test():
    assert bonferroni_reject([0.049], 0.05).rejected.tolist() == [True]
    assert bonferroni_reject([0.051], 0.05).rejected.tolist() == [False]


def test_bonferroni_split_doubles_level():
    p = np.full(100, 0.5)
    half = bonferroni_reject(p[:50], 0.05).threshold_p
    assert half == pytest.approx(2 * bonferroni_reject(p, 0.05).threshold_p)


def test_fdp_examples():
    ds = Dataset.from_arrays([3.0, 2.0, 4.0, 0.0], ids=list("abcd"), is_null=[1, 0, 0, 1])
    mask = np.array([True, True, True, False])
    assert false_discovery_proportion(mask, ds) == pytest.approx(1 / 3)
    assert false_discovery_proportion(np.zeros(4, bool), ds) == 0.0


def test_fdp_needs_truth():
    ds = Dataset.from_arrays([3.0, 2.0])
    with pytest.raises(DataError, match="missing truth"):
        false_discovery_proportion(np.array([True, False]), ds)


def test_null_pvalues_directions():
    ne = NullEstimate(delta0=0.5, sigma0=2.0, p0=0.9, source="empirical_mle")
    assert null_pvalues(0.5, ne) == pytest.approx(1.0)
    assert null_pvalues(2.5, ne, "right") == pytest.approx(stats.norm.sf(1.0))
    assert null_pvalues(-1.5, ne, "two_sided") == pytest.approx(2 * stats.norm.sf(1.0))
    with pytest.raises(ValueError):
        null_pvalues(0.0, ne, "up")


def test_accuracy_examples():
    acc = fdrbar_accuracy(1000, 0.01)
    assert acc.e == pytest.approx(10)
    assert acc.d == pytest.approx(ACC_1000_D, abs=1e-12)
    assert acc.c == pytest.approx(ACC_1000_C, abs=1e-5)
    assert acc.CV_first_order == pytest.approx(ACC_1000_CV1, abs=1e-4)
    assert acc.CV == pytest.approx(ACC_1000_CV, abs=5e-4)
    assert round(acc.CV, 3) == 0.238


def test_accuracy_large_N():
    acc = fdrbar_accuracy(10**9, 0.01)
    assert acc.d < 1e-6
    assert acc.mean_D == pytest.approx(1, abs=1e-6)
    assert acc.CV < 1e-3


def test_accuracy_rejects_degenerate():
    for F in (0.0, 1.0):
        with pytest.raises(ValueError):
            fdrbar_accuracy(100, F)


def test_exact_moments():
    mean, _, cv = fdrbar_exact_moments(5000, 0.01)
    assert mean == pytest.approx(EXACT_D_MEAN, abs=1e-5)
    assert cv == pytest.approx(EXACT_D_CV, abs=1e-5)
    # both expansions agree with the exact values to first order
    acc = fdrbar_accuracy(5000, 0.01)
    assert mean - 1 == pytest.approx(acc.d, rel=0.1)
    assert cv == pytest.approx(acc.CV_first_order, rel=0.05)
