"""End-to-end analyses behind the command line, each returning a :class:`Report`."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DataError, Dataset, RelevanceFunction
from .density import (
    BinnedCounts, BinSpec, DensityFit, NullEstimate, bin_counts, fit_empirical_null,
    fit_mixture_density, theoretical_null,
)
from .enrichment import bh_across_sets, enrichment_fdr_report
from .fdr import FdrCurve, bh_reject, fdrbar_accuracy, local_fdr_curve
from .io import AnalysisConfig, Report
from .separate import (
    fit_class_prob_curve, null_class_prob_curve, null_flatness_diagnostic, relevance_components,
    subclass_fdr_curve,
)

BASIS_NAMES = {"cubic": "cubic", "flat-interval": "flat_interval", "flat_interval": "flat_interval",
               "linear": "linear"}
CORRECTION_NAMES = {"none": "none", "plug-in-zero": "plug_in_zero", "plug_in_zero": "plug_in_zero",
                    "pa0-hat": "pA0_hat", "pA0_hat": "pA0_hat"}


@dataclass
class CombinedFit:
    spec: BinSpec
    counts: BinnedCounts
    density: DensityFit
    null: NullEstimate
    curve: FdrCurve


def bin_spec(z: np.ndarray, cfg: AnalysisConfig) -> BinSpec:
    if cfg.bin_range is not None:
        lo, hi = cfg.bin_range
        K = cfg.bins or max(42, int(np.ceil((hi - lo) / 0.2)))
        return BinSpec(float(lo), float(hi), int(K))
    spec = BinSpec.for_data(z)
    if cfg.bins:
        spec = BinSpec(spec.lo, spec.hi, int(cfg.bins))
    return spec


def estimate_null(z: np.ndarray, cfg: AnalysisConfig) -> NullEstimate:
    if cfg.null_mode == "empirical":
        return fit_empirical_null(z, cfg.central_fraction)
    return theoretical_null()


def fit_combined(ds: Dataset, cfg: AnalysisConfig, in_class=None) -> CombinedFit:
    spec = bin_spec(ds.z, cfg)
    counts = bin_counts(ds.z, spec, in_class=in_class)
    density = fit_mixture_density(counts, cfg.degree)
    null = estimate_null(ds.z, cfg)
    return CombinedFit(spec, counts, density, null, local_fdr_curve(null, density))


def case_tail_fdr(fit: CombinedFit, z: np.ndarray) -> np.ndarray:
    """Tail Fdr on each case's own side of the null centre."""
    left = z < fit.null.delta0
    return np.where(left, fit.curve.Fdr_at(z, "left"), fit.curve.Fdr_at(z, "right"))


def _counts_table(fit: CombinedFit) -> dict:
    mid = fit.spec.midpoints
    n = fit.counts.N
    table = {
        "z": mid,
        "count": fit.counts.N_k,
        "fitted": fit.density.fitted_counts,
        "null_fitted": n * fit.spec.width * fit.null.p0 * fit.null.pdf(mid),
    }
    if fit.counts.N_Ak is not None:
        table["count_A"] = fit.counts.N_Ak
        table["r_A"] = fit.counts.r_Ak
    return table


def _fit_manifest(fit: CombinedFit) -> dict:
    return {
        "null": fit.null.as_dict(),
        "bins": {"lo": fit.spec.lo, "hi": fit.spec.hi, "K": fit.spec.K},
        "density": {"degree": fit.density.degree, "iterations": fit.density.glm.n_iter,
                    "coefficients": fit.density.coefficients},
    }


def combined_analysis(ds: Dataset, cfg: AnalysisConfig) -> tuple[Report, CombinedFit]:
    """Combined local and tail fdr with a two-sided BH rule at ``cfg.q``."""
    fit = fit_combined(ds, cfg)
    bh = bh_reject(ds, fit.null, cfg.q, "two_sided")
    cases = {
        "id": ds.ids, "z": ds.z, "fdr": fit.curve.fdr_at(ds.z), "Fdr": case_tail_fdr(fit, ds.z),
        "rejected_bh": bh.rejected,
    }
    g = fit.curve.grid
    curves = {
        "z": g, "f": fit.density.pdf(g), "f0": fit.null.pdf(g), "fdr": fit.curve.fdr,
        "Fdr_left": fit.curve.Fdr_left, "Fdr_right": fit.curve.Fdr_right,
        "sd_log_f": fit.density.sd_log_pdf(g),
    }
    manifest = _fit_manifest(fit)
    manifest["bh"] = {"q": cfg.q, "n_rejected": bh.n_rejected, "threshold_z": bh.threshold_z}
    return Report(tables={"cases": cases, "curves": curves, "counts": _counts_table(fit)},
                  manifest=manifest), fit


def _class_mask(ds: Dataset, label: str | None = None, ids=None) -> tuple[str, np.ndarray]:
    if ids is not None:
        mask = np.isin(ds.ids.astype(str), [str(i) for i in ids])
        if not mask.any():
            raise DataError("none of the listed ids are in the data")
        return label or "set", mask
    if ds.labels is None:
        raise DataError("data has no class column")
    if label is None:
        present = sorted(ds.label_set())
        if not present:
            raise DataError("data has no class labels")
        label = present[0]
    mask = np.asarray(ds.labels == label, dtype=bool)
    if not mask.any():
        raise DataError(f"unknown label {label!r}")
    if mask.all():
        raise DataError("empty class B")
    return label, mask


def _theorem_tables(ds, fit, mask, cfg, pa0, basis, correction, tag="A"):
    pa = fit_class_prob_curve(bin_counts(ds.z, fit.spec, in_class=mask), basis)
    rep = subclass_fdr_curve(fit.curve, pa, pa0, correction, z_A=ds.z[mask])
    curves = {
        "z": rep.grid, "f": fit.density.pdf(rep.grid), "f0": fit.null.pdf(rep.grid),
        "fdr": rep.fdr_combined, f"pi{tag}": rep.pi_A, f"pi{tag}0": rep.pi_A0,
        f"R{tag}": rep.R_A, f"fdr{tag}": rep.fdr_A, "sd_log_fdr": rep.sd_log_fdr_combined,
        f"sd_log_R{tag}": rep.sd_log_R_A, f"sd_log_fdr{tag}": rep.sd_log_fdr_A,
    }
    info = {"basis": basis, "correction": correction, "penalized": pa.penalized,
            "coefficients": pa.coefficients, "p_A0_hat": rep.p_A0_hat,
            "correction_factor": rep.correction_factor, "pi_A0_kind": pa0.kind,
            "n_floored": int(np.count_nonzero(rep.floored))}
    return rep, pa, curves, info


def separate_analysis(ds: Dataset, cfg: AnalysisConfig, label: str | None = None) -> Report:
    """Two-class analysis: class curves, null class probability, fdr_A and fdr_B.

    With the empirical null and at least 200 cases per class, each class gets
    its own null and ``pi_A0(z)`` follows from Bayes rule; otherwise
    ``pi_A0 = pi_A``.
    """
    label, mask = _class_mask(ds, label)
    fit = fit_combined(ds, cfg, in_class=mask)
    basis = BASIS_NAMES[cfg.basis]
    correction = CORRECTION_NAMES[cfg.correction]
    pi_A = mask.mean()
    nulls = None
    if cfg.null_mode == "empirical" and min(mask.sum(), (~mask).sum()) >= 200:
        nulls = (fit_empirical_null(ds.z[mask], cfg.central_fraction),
                 fit_empirical_null(ds.z[~mask], cfg.central_fraction))
        pa0 = null_class_prob_curve(pi_A, "parametric", nulls=nulls)
        pb0 = null_class_prob_curve(1 - pi_A, "parametric", nulls=nulls[::-1])
    else:
        pa0 = null_class_prob_curve(pi_A)
        pb0 = null_class_prob_curve(1 - pi_A)
    rep_a, _, curves, info_a = _theorem_tables(ds, fit, mask, cfg, pa0, basis, correction, "A")
    rep_b, _, curves_b, info_b = _theorem_tables(ds, fit, ~mask, cfg, pb0, basis, correction, "B")
    curves.update({k: v for k, v in curves_b.items() if k not in curves})
    own = np.where(mask, rep_a.fdr_A_at(ds.z), rep_b.fdr_A_at(ds.z))
    cases = {
        "id": ds.ids, "z": ds.z, "class": np.where(mask, label, "other"),
        "fdr": fit.curve.fdr_at(ds.z), "Fdr": case_tail_fdr(fit, ds.z), "fdr_class": own,
        "rejected_bh": bh_reject(ds, fit.null, cfg.q).rejected, "fdr_class_below_q": own <= cfg.q,
    }
    flat = null_flatness_diagnostic(rep_a.curve)
    manifest = _fit_manifest(fit)
    manifest.update(label_A=label, N_A=int(mask.sum()), pi_A=float(pi_A), class_A=info_a, class_B=info_b,
                    flatness={"flat": flat.flat, "mean_slope": flat.mean_slope, "se": flat.se_mean_slope})
    if nulls is not None:
        manifest["class_nulls"] = {"A": nulls[0].as_dict(), "B": nulls[1].as_dict()}
    return Report(tables={"cases": cases, "curves": curves, "counts": _counts_table(fit)}, manifest=manifest)


def subclass_analysis(ds: Dataset, cfg: AnalysisConfig, label: str | None = None, ids=None) -> Report:
    """Small-subclass route: ``fdr_A = fdr pi_A0 / pi_A(z)`` with ``pi_A0 = pi_A``."""
    label, mask = _class_mask(ds, label, ids)
    if mask.all():
        raise DataError("empty class B")
    fit = fit_combined(ds, cfg, in_class=mask)
    basis = BASIS_NAMES[cfg.basis]
    correction = CORRECTION_NAMES[cfg.correction]
    pa0 = null_class_prob_curve(mask.mean())
    rep, pa, curves, info = _theorem_tables(ds, fit, mask, cfg, pa0, basis, correction, "A")
    zA = ds.z[mask]
    fdrA = rep.fdr_A_at(zA)
    cases = {
        "id": ds.ids[mask], "z": zA, "fdr": fit.curve.fdr_at(zA), "Fdr": case_tail_fdr(fit, zA),
        "fdrA": fdrA, "fdrA_below_q": fdrA <= cfg.q,
    }
    manifest = _fit_manifest(fit)
    manifest.update(label_A=label, N_A=int(mask.sum()), pi_A=float(mask.mean()), class_A=info,
                    n_fdrA_below_q=int(np.count_nonzero(fdrA <= cfg.q)))
    return Report(tables={"cases": cases, "curves": curves, "counts": _counts_table(fit)}, manifest=manifest)


def enrich_analysis(ds: Dataset, cfg: AnalysisConfig, sets: dict[str, list[str]],
                    side_split: bool = False, threshold: float = 0.10) -> tuple[Report, dict]:
    """Slope test and within-set fdr for every gene set, with BH across sets."""
    fit = fit_combined(ds, cfg)
    ids = ds.ids.astype(str)
    results, skipped = [], {}
    for name, members in sets.items():
        mask = np.isin(ids, members)
        try:
            results.append(enrichment_fdr_report(ds, mask, fit.curve, threshold,
                                                 BASIS_NAMES[cfg.basis], side_split, name))
        except DataError as exc:
            skipped[name] = str(exc)
    if not results:
        raise DataError("no gene set could be tested")
    bh = bh_across_sets(results, cfg.q)
    table = {k: [] for k in ("set", "N_A", "S", "p_two_sided", "bh_rejected", "S_pos", "S_neg", "n_below")}
    members = {"set": [], "id": [], "z": [], "fdrA": []}
    z_of = dict(zip(ids, ds.z))
    for r in results:
        for k, v in (("set", r.set_label), ("N_A", r.N_A), ("S", r.S), ("p_two_sided", r.p_two_sided),
                     ("bh_rejected", bh[r.set_label]), ("S_pos", r.S_pos), ("S_neg", r.S_neg),
                     ("n_below", r.n_below_threshold)):
            table[k].append(v)
        for i, v in r.per_case_fdrA.items():
            members["set"].append(r.set_label)
            members["id"].append(i)
            members["z"].append(z_of[i])
            members["fdrA"].append(v)
    manifest = _fit_manifest(fit)
    manifest.update(n_sets=len(sets), n_tested=len(results), skipped=skipped, threshold=threshold)
    by_name = {r.set_label: r for r in results}
    return Report(tables={"sets": table, "members": members}, manifest=manifest), by_name


def relevance_analysis(ds: Dataset, cfg: AnalysisConfig, covariate: str, bandwidth: float = 10.0,
                       focal=None) -> Report:
    """Kernel relevance-weighted tail Fdr for each focal case (all cases by default)."""
    rho = RelevanceFunction("kernel", covariate=covariate, bandwidth=bandwidth)
    null = estimate_null(ds.z, cfg)
    idx = range(ds.N) if focal is None else [ds.index_of(str(f)) for f in focal]
    rows = {"id": [], "z": [], "x": [], "Fdr": [], "R": [], "Fdr_i": []}
    for i in idx:
        direction = "left" if ds.z[i] < null.delta0 else "right"
        res = relevance_components(ds, i, rho, null, direction=direction)
        for k, v in (("id", ds.ids[i]), ("z", ds.z[i]), ("x", ds.covariates[covariate][i]),
                     ("Fdr", res.Fdr), ("R", res.R), ("Fdr_i", res.Fdr_i)):
            rows[k].append(v)
    return Report(tables={"relevance": rows},
                  manifest={"null": null.as_dict(), "covariate": covariate, "bandwidth": bandwidth})


def diagnose_analysis(ds: Dataset, cfg: AnalysisConfig, label: str | None = None) -> Report:
    """Null estimates, Fdr-bar accuracy along the tails and, with classes, flatness near zero."""
    fit = fit_combined(ds, cfg)
    theo = theoretical_null(ds.z)
    try:
        emp = fit_empirical_null(ds.z, cfg.central_fraction).as_dict()
    except DataError as exc:
        emp = {"error": str(exc)}
    zs = np.sort(ds.z)
    rows = {k: [] for k in ("z", "side", "N_z", "F_z", "d", "c", "mean_D", "CV", "CV_first_order")}
    for side, zz in (("left", zs[:ds.N // 2]), ("right", zs[::-1][:ds.N // 2])):
        for n_z in (10, 20, 50, 100, 200, 500):
            if n_z >= zz.size:
                break
            F = n_z / ds.N
            acc = fdrbar_accuracy(ds.N, F, float(zz[n_z - 1]))
            for k, v in (("z", acc.z), ("side", side), ("N_z", n_z), ("F_z", F), ("d", acc.d), ("c", acc.c),
                         ("mean_D", acc.mean_D), ("CV", acc.CV), ("CV_first_order", acc.CV_first_order)):
                rows[k].append(v)
    manifest = _fit_manifest(fit)
    manifest.update(theoretical_null=theo.as_dict(), empirical_null=emp)
    if ds.labels is not None and len(ds.label_set()) >= 2:
        label, mask = _class_mask(ds, label)
        pa = fit_class_prob_curve(bin_counts(ds.z, fit.spec, in_class=mask), BASIS_NAMES[cfg.basis])
        flat = null_flatness_diagnostic(pa)
        manifest["flatness"] = {"label": label, "flat": flat.flat, "mean_slope": flat.mean_slope,
                                "se": flat.se_mean_slope, "max_abs_slope": flat.max_abs_logit_slope}
    return Report(tables={"accuracy": rows}, manifest=manifest)
