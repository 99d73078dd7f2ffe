import numpy as np
import pytest
from scipy import stats
from scipy.special import expit

from covfdr import DataError, Dataset, RelevanceFunction
from covfdr.density import BinSpec, NullEstimate, bin_counts, fit_mixture_density, theoretical_null
from covfdr.fdr import local_fdr_curve
from covfdr.separate import (
    ClassProbCurve, class_basis, empirical_tail_fdr, fit_class_prob_curve, fit_unbinned_class_curve,
    null_class_prob_curve, null_flatness_diagnostic, relevance_components, sd_log_fdrA,
    subclass_fdr_curve, subclass_tail_fdr,
)
from covfdr.simulation import TwoClassSimConfig, replicate_subclass_study

from oracles import PI_A0_AT_3, PI_A_SMALL


def _constant_curve(p, basis="cubic"):
    k = class_basis(0.0, basis).shape[1]
    coef = np.zeros(k)
    coef[0] = np.log(p / (1 - p)) if p < 1 else 40.0
    return ClassProbCurve(basis=basis, coefficients=coef, coef_covariance=np.eye(k) * 1e-3)


def test_flat_interval_basis():
    X = class_basis([-2.0, 0.0, 1.0, 2.0, 3.0], "flat_interval")
    assert X[:, 1].tolist() == [0, 0, 0, 1, 4]
    assert X[:, 2].tolist() == [0, 0, 0, 1, 8]
    Xn = class_basis([-3.0, 0.5], "flat_interval", side="negative")
    assert Xn[:, 1].tolist() == [4, 0]


def test_all_A_gives_pi_one():
    z = np.random.default_rng(1).standard_normal(2000)
    bc = bin_counts(z, BinSpec.for_data(z), in_class=np.ones(2000, bool))
    pa = fit_class_prob_curve(bc)
    assert pa.penalized
    assert np.all(pa.pi(np.linspace(-3, 3, 61)) >= 0.99)


def test_independent_labels_give_null_slopes():
    hits_linear = hits_cubic = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        z = rng.standard_normal(5000)
        A = rng.random(5000) < 0.5
        bc = bin_counts(z, BinSpec.for_data(z), in_class=A)
        for basis in ("linear", "cubic"):
            pa = fit_class_prob_curve(bc, basis)
            se = np.sqrt(np.diag(pa.coef_covariance))[1:]
            ok = np.all(np.abs(pa.coefficients[1:]) <= 2 * se)
            if basis == "linear":
                hits_linear += ok
            else:
                hits_cubic += ok
    # one 2-se test holds about 95% of the time, three jointly somewhat less
    assert 0.90 <= hits_linear / 200 <= 0.99
    assert hits_cubic / 200 >= 0.85


def test_shifted_class_gives_increasing_curve():
    mono = 0
    g = np.linspace(-3, 3, 121)
    for seed in range(50):
        rng = np.random.default_rng(seed)
        A = rng.random(10_000) < 0.5
        z = rng.standard_normal(10_000) + np.where(A, 0.5, 0.0)
        pa = fit_class_prob_curve(bin_counts(z, BinSpec.for_data(z), in_class=A))
        mono += np.all(np.diff(pa.pi(g)) > 0)
    assert mono / 50 >= 0.9


def test_parametric_null_class_prob_table_values():
    A = NullEstimate(0.06, 1.09, 0.97, "empirical_mle")
    B = NullEstimate(-0.29, 1.01, 1.00, "empirical_mle")
    pa0 = null_class_prob_curve(0.5, "parametric", nulls=(A, B))
    assert pa0(3.0)[0] == pytest.approx(PI_A0_AT_3, abs=1e-12)
    assert round(float(pa0(3.0)[0]), 2) == 0.83


def test_parametric_odds_reproduced_exactly():
    A = NullEstimate(0.2, 1.3, 0.8, "empirical_mle")
    B = NullEstimate(-0.1, 0.9, 0.95, "empirical_mle")
    pa0 = null_class_prob_curve(0.3, "parametric", nulls=(A, B))
    z = np.linspace(-4, 4, 17)
    num = 0.3 * 0.8 * stats.norm.pdf(z, 0.2, 1.3)
    den = 0.7 * 0.95 * stats.norm.pdf(z, -0.1, 0.9)
    np.testing.assert_allclose(pa0(z), num / (num + den), rtol=1e-12)


def test_parametric_symmetric_case():
    ne = NullEstimate(0.0, 1.0, 0.9, "theoretical")
    pa0 = null_class_prob_curve(0.5, "parametric", nulls=(ne, ne))
    np.testing.assert_allclose(pa0(np.linspace(-3, 3, 7)), 0.5, rtol=0, atol=1e-15)


def test_constant_null_class_prob():
    assert null_class_prob_curve(PI_A_SMALL)(1.0)[0] == pytest.approx(PI_A_SMALL)
    assert round(float(null_class_prob_curve(82 / 15443)(0.0)[0]), 4) == 0.0053
    pa0 = null_class_prob_curve(0.2, p_A0=0.5, p0=0.9)
    assert pa0(0.0)[0] == pytest.approx(0.2 * 0.5 / 0.9)


def test_parametric_needs_nulls():
    with pytest.raises(DataError):
        null_class_prob_curve(0.5, "parametric")
    with pytest.raises(DataError):
        null_class_prob_curve(0.5, "plug_in_at_zero")


def test_class_equals_everything(mixture_fit):
    pa = _constant_curve(1.0)
    pa0 = null_class_prob_curve(1.0)
    rep = subclass_fdr_curve(mixture_fit, pa, pa0)
    np.testing.assert_array_equal(rep.R_A, 1.0)
    np.testing.assert_array_equal(rep.fdr_A, mixture_fit.fdr)
    np.testing.assert_array_equal(rep.sd_log_R_A, 0.0)
    np.testing.assert_array_equal(rep.sd_log_fdr_A, rep.sd_log_fdr_combined)


def _class_fit(seed=3):
    rng = np.random.default_rng(seed)
    N = 8000
    A = rng.random(N) < 0.2
    alt = rng.random(N) < np.where(A, 0.3, 0.05)
    z = rng.standard_normal(N) + np.where(alt, 2.5, 0.0)
    spec = BinSpec.for_data(z)
    bc = bin_counts(z, spec, in_class=A)
    fdr = local_fdr_curve(theoretical_null(z), fit_mixture_density(bc))
    return z, A, fdr, fit_class_prob_curve(bc)


@pytest.mark.parametrize("correction", ["none", "plug_in_zero", "pA0_hat"])
def test_report_invariants(correction):
    z, A, fdr, pa = _class_fit()
    rep = subclass_fdr_curve(fdr, pa, null_class_prob_curve(A.mean()), correction, z_A=z[A])
    np.testing.assert_allclose(rep.fdr_A, np.minimum(1.0, rep.fdr_combined * rep.R_A), rtol=1e-12)
    np.testing.assert_allclose(rep.sd_log_fdr_A**2, rep.sd_log_fdr_combined**2 + rep.sd_log_R_A**2,
                               rtol=1e-12)
    assert np.all((rep.fdr_A > 0) & (rep.fdr_A <= 1))
    np.testing.assert_allclose(rep.fdr_A_at(rep.grid), rep.fdr_A, rtol=1e-12)


def test_pA0_hat_correction_factor():
    z, A, fdr, pa = _class_fit()
    pa0 = null_class_prob_curve(A.mean())
    plain = subclass_fdr_curve(fdr, pa, pa0, "none", z_A=z[A])
    corr = subclass_fdr_curve(fdr, pa, pa0, "pA0_hat", z_A=z[A])
    assert corr.correction_factor == pytest.approx(plain.p_A0_hat / fdr.null.p0)
    # the class is 30% nonnull against 5% outside, so the estimate sits below p0
    assert plain.p_A0_hat < fdr.null.p0
    with pytest.raises(DataError):
        subclass_fdr_curve(fdr, pa, pa0, "pA0_hat")


def test_plug_in_zero_uses_curve_at_zero():
    z, A, fdr, pa = _class_fit()
    rep = subclass_fdr_curve(fdr, pa, null_class_prob_curve(A.mean()), "plug_in_zero")
    np.testing.assert_allclose(rep.pi_A0, pa.pi(0.0)[0])


def test_pi_floor_is_flagged(mixture_fit):
    pa = _constant_curve(1e-9)
    rep = subclass_fdr_curve(mixture_fit, pa, null_class_prob_curve(0.01))
    assert rep.floored.all()


class _ExactTail:
    """Combined tail Fdr by enumeration of a discrete model."""

    def __init__(self, points, null_counts, all_counts):
        self.points, self.n0, self.n = points, null_counts, all_counts

    def Fdr_at(self, z, direction="left"):
        z = np.atleast_1d(z)
        out = []
        for t in z:
            keep = self.points <= t if direction == "left" else self.points >= t
            out.append(self.n0[keep].sum() / self.n[keep].sum())
        return np.array(out)


def _discrete_model():
    points = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    counts = {
        ("A", True): np.array([10, 40, 60, 40, 10]),
        ("A", False): np.array([20, 12, 4, 4, 0]),
        ("B", True): np.array([100, 400, 600, 400, 100]),
        ("B", False): np.array([80, 40, 20, 10, 10]),
    }
    z, cls, null = [], [], []
    for (c, is_null), n in counts.items():
        for p, k in zip(points, n):
            z += [p] * k
            cls += [c] * k
            null += [is_null] * k
    return points, counts, np.array(z), np.array(cls) == "A", np.array(null)


@pytest.mark.parametrize("direction", ["left", "right"])
def test_tail_theorem_on_discrete_model(direction):
    points, counts, z, in_A, null = _discrete_model()
    n0 = counts[("A", True)] + counts[("B", True)]
    n = n0 + counts[("A", False)] + counts[("B", False)]
    exact = _ExactTail(points, n0, n)
    # identical class nulls: pi_A0 = pi_A p_A0 / p0
    pa0 = null_class_prob_curve(in_A.mean(), p_A0=null[in_A].mean(), p0=null.mean())
    rep = subclass_tail_fdr(points, z, in_A, pa0, direction, fdr=exact)
    for t, got in zip(points, rep.Fdr_A):
        keep = (z <= t) if direction == "left" else (z >= t)
        direct = np.count_nonzero(keep & in_A & null) / np.count_nonzero(keep & in_A)
        assert got == pytest.approx(direct, abs=1e-12)


def test_tail_class_everything(rng):
    z = rng.standard_normal(300)
    rep = subclass_tail_fdr([-1.0, 0.0], z, np.ones(300, bool), null_class_prob_curve(1.0))
    np.testing.assert_allclose(rep.Fdr_A, rep.Fdr, rtol=1e-15)


def test_tail_empty_errors():
    z = np.array([-1.0, 0.0, 1.0])
    with pytest.raises(DataError, match="empty tail"):
        subclass_tail_fdr([-0.5], z, np.array([False, True, True]), null_class_prob_curve(0.5))
    with pytest.raises(DataError, match="empty tail"):
        subclass_tail_fdr([-3.0], z, np.ones(3, bool), null_class_prob_curve(0.5))


def _relevance_instance():
    rng = np.random.default_rng(7)
    z = rng.standard_normal(100) - np.where(np.arange(100) < 30, 1.0, 0.0)
    labels = np.where(np.arange(100) < 30, "A", "B")
    return Dataset.from_arrays(z, labels=labels, covariates={"x": np.arange(100.0)})


def test_relevance_all_ones():
    ds = _relevance_instance()
    ds = Dataset.from_arrays(ds.z, labels=["A"] * ds.N)
    res = relevance_components(ds, 0, RelevanceFunction("indicator"))
    assert res.R == pytest.approx(1.0, abs=1e-15)
    assert res.Fdr_i == pytest.approx(empirical_tail_fdr(ds.z[0], ds.z, NullEstimate())[0], rel=1e-14)


def test_relevance_indicator_matches_subclass_tail():
    ds = _relevance_instance()
    in_A = ds.labels == "A"
    pa0 = null_class_prob_curve(in_A.mean())
    for i in np.flatnonzero(in_A):
        got = relevance_components(ds, i, RelevanceFunction("indicator")).Fdr_i
        want = subclass_tail_fdr(ds.z[i], ds.z, in_A, pa0)
        assert got == pytest.approx(want.Fdr_A[0], abs=1e-12)


def test_relevance_kernel_smooth_in_x():
    rng = np.random.default_rng(11)
    x = np.arange(1000.0)
    z = rng.standard_normal(1000) - 1.5 * (rng.random(1000) < 0.3 * x / 1000)
    ds = Dataset.from_arrays(z, covariates={"x": x})
    rho = RelevanceFunction("kernel", covariate="x", bandwidth=10)
    vals = np.array([relevance_components(ds, i, rho, z=-2.0).Fdr_i for i in range(1000)])
    # relevance shifts weight toward high-x cases, where nonnulls are concentrated
    assert vals[0] > vals[-1]
    # neighbouring x values move the estimate only slightly
    assert np.max(np.abs(np.diff(vals))) < 0.05 * (vals.max() - vals.min())


def test_relevance_errors():
    ds = _relevance_instance()
    rho = RelevanceFunction("indicator", label="A")
    with pytest.raises(DataError, match="N\\(z\\) = 0"):
        relevance_components(ds, 0, rho, z=-10.0)
    with pytest.raises(DataError, match="zero relevance"):
        relevance_components(ds, 0, RelevanceFunction("indicator", label="B"), z=np.sort(ds.z)[0])


def _flat_rate(shift, seeds=200, N=15_000):
    flat = 0
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        A = rng.random(N) < 0.5
        z = rng.standard_normal(N) - np.where(A, 0.0, shift)
        pa = fit_class_prob_curve(bin_counts(z, BinSpec.for_data(z), in_class=A))
        flat += null_flatness_diagnostic(pa).flat
    return flat / seeds


def test_flatness_identical_nulls():
    assert _flat_rate(0.0) >= 0.9


def test_flatness_shifted_nulls():
    assert _flat_rate(0.35) <= 0.1


def test_flatness_constant_curve():
    rep = null_flatness_diagnostic(_constant_curve(0.3))
    assert rep.max_abs_logit_slope == 0.0
    assert rep.flat


def test_unbinned_curve_recovers_logistic(rng):
    z = rng.standard_normal(20_000)
    A = rng.random(z.size) < expit(-2 + 0.8 * z)
    curve, res = fit_unbinned_class_curve(z, A)
    assert res.converged
    np.testing.assert_allclose(curve.coefficients, [-2, 0.8], atol=0.1)


def test_sd_decomposition_matches_replication():
    # delta-method sd against the replication sd at the listed z values; the
    # log fdr term covers the density fit only, so the theoretical null is used
    study = replicate_subclass_study(TwoClassSimConfig(), 100, null_mode="theoretical")
    table = study.sd_table()
    for z in (1.5, 2.0, 2.5, 3.0):
        i = int(np.argmin(np.abs(study.grid - z)))
        for key in ("sd_log_fdr", "sd_log_RA", "sd_log_fdrA"):
            ratio = table["delta_" + key][i] / table[key][i]
            assert 1 / 1.5 <= ratio <= 1.5, (z, key, ratio)


def test_sd_log_fdrA_returns_three_curves(mixture_fit):
    pa = _constant_curve(0.5)
    sd_fdr, sd_R, sd_A = sd_log_fdrA(mixture_fit, pa)
    assert sd_fdr.shape == sd_R.shape == sd_A.shape == mixture_fit.grid.shape
    np.testing.assert_allclose(sd_A**2, sd_fdr**2 + sd_R**2)
