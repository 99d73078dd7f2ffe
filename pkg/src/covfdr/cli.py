"""Command-line interface: ``covfdr <command> [options] DATA``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 fit failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, plotting
from .core import DataError, FitError
from .io import AnalysisConfig, Report, adjust_z_local, export_report, load_gene_sets, load_id_list, load_table
from .simulation import (
    PRESETS, PoissonSimConfig, accuracy_simulation, combined_control_check, jensen_information_check,
    poisson_model_checks, replicate_subclass_study,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_FIT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _global_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("analysis options")
    g.add_argument("--q", type=float, default=0.1, help="false discovery rate level (default 0.1)")
    g.add_argument("--null", choices=["theoretical", "empirical"], default=None,
                   help="null distribution (default: theoretical; empirical for simulate)")
    g.add_argument("--seed", type=int, default=0, help="random seed (COVFDR_SEED overrides)")
    g.add_argument("--bins", type=int, default=None, help="number of histogram bins")
    g.add_argument("--basis", choices=["cubic", "flat-interval"], default="cubic")
    g.add_argument("--correction", choices=["none", "plug-in-zero", "pa0-hat"], default="none")
    g.add_argument("--central-fraction", type=float, default=0.8,
                   help="share of z-values used to fit the empirical null")
    g.add_argument("--out", default="covfdr_out", help="output directory")
    g.add_argument("--no-plots", action="store_true", help="skip figure rendering")


def _data_options(p, class_column=True):
    p.add_argument("data", help="CSV/TSV table with a header and a z column")
    p.add_argument("--z-column", default="z")
    p.add_argument("--id-column", default="id")
    if class_column:
        p.add_argument("--class-column", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="covfdr", description="Combined and separate-class false discovery rate analysis.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="combined fdr, tail Fdr and BH")
    _data_options(p)
    _global_options(p)

    p = sub.add_parser("separate", help="two-class analysis via the class probability curve")
    _data_options(p)
    p.add_argument("--label", default=None, help="class treated as A (default: first label)")
    _global_options(p)

    p = sub.add_parser("subclass", help="fdr for a small subclass or id set")
    _data_options(p)
    p.add_argument("--set", dest="set_file", default=None, help="file of case ids")
    p.add_argument("--label", default=None)
    _global_options(p)

    p = sub.add_parser("enrich", help="enrichment slope tests for gene sets")
    _data_options(p, class_column=False)
    p.add_argument("--sets", required=True, help="NAME<TAB>id1,id2,... file")
    p.add_argument("--side-split", action="store_true")
    p.add_argument("--threshold", type=float, default=0.10)
    _global_options(p)

    p = sub.add_parser("relevance", help="kernel relevance-weighted tail Fdr")
    _data_options(p)
    p.add_argument("--covariate", required=True)
    p.add_argument("--bandwidth", type=float, default=10.0)
    p.add_argument("--focal", nargs="*", default=None, help="ids of focal cases (default all)")
    _global_options(p)

    p = sub.add_parser("adjust", help="local median/spread adjustment of z")
    _data_options(p)
    p.add_argument("--covariate", required=True)
    p.add_argument("--window", type=int, default=200)
    _global_options(p)

    p = sub.add_parser("simulate", help="Monte Carlo checks on the two-class model")
    p.add_argument("--preset", choices=sorted(PRESETS), default="two_class")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--checks", nargs="+", default=["subclass"],
                   choices=["subclass", "poisson", "control", "jensen", "accuracy", "all"])
    p.add_argument("--workers", type=int, default=1)
    _global_options(p)

    p = sub.add_parser("diagnose", help="null, accuracy and flatness diagnostics")
    _data_options(p)
    p.add_argument("--label", default=None)
    _global_options(p)
    return parser


def _seed(args) -> int:
    env = os.environ.get("COVFDR_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"COVFDR_SEED must be an integer, got {env!r}") from None
    return args.seed


def _config(args) -> AnalysisConfig:
    try:
        return AnalysisConfig(
            input_path=getattr(args, "data", None),
            z_column=getattr(args, "z_column", "z"),
            id_column=getattr(args, "id_column", "id"),
            class_column=getattr(args, "class_column", None),
            set_file=getattr(args, "set_file", None) or getattr(args, "sets", None),
            null_mode=args.null or ("empirical" if args.command == "simulate" else "theoretical"),
            q=args.q, bins=args.bins, central_fraction=args.central_fraction,
            basis=args.basis, correction=args.correction, seed=_seed(args), output_dir=args.out,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _figure(report: Report, out: Path, name: str, fn, *a) -> None:
    path = out / f"{name}.png"
    fn(*a, path)
    report.figures.append(path.name)


def run(args) -> int:
    cfg = _config(args)
    out = Path(cfg.output_dir)
    plots = not args.no_plots
    cmd = args.command
    if cmd == "simulate":
        report = _simulate(args, cfg, out, plots)
    else:
        ds = load_table(cfg.input_path, cfg)
        if cmd == "fit":
            report, _ = analysis.combined_analysis(ds, cfg)
            if plots:
                out.mkdir(parents=True, exist_ok=True)
                _figure(report, out, "fdr", plotting.plot_fdr_curves, ds.z,
                        report.tables["counts"], report.tables["curves"])
        elif cmd in ("separate", "subclass"):
            if cmd == "separate":
                report = analysis.separate_analysis(ds, cfg, args.label)
            else:
                ids = load_id_list(args.set_file) if args.set_file else None
                report = analysis.subclass_analysis(ds, cfg, args.label, ids)
            if plots:
                out.mkdir(parents=True, exist_ok=True)
                _figure(report, out, "fdr", plotting.plot_fdr_curves, ds.z,
                        report.tables["counts"], report.tables["curves"])
                _figure(report, out, "class_prob", plotting.plot_class_curves,
                        report.tables["curves"], report.tables["counts"])
        elif cmd == "enrich":
            report, results = analysis.enrich_analysis(ds, cfg, load_gene_sets(args.sets),
                                                       args.side_split, args.threshold)
            if plots:
                out.mkdir(parents=True, exist_ok=True)
                ids = ds.ids.astype(str)
                best = min(results.values(), key=lambda r: r.p_two_sided)
                _figure(report, out, "top_set", plotting.plot_set_histogram, ds.z,
                        np.isin(ids, list(best.per_case_fdrA)))
        elif cmd == "relevance":
            report = analysis.relevance_analysis(ds, cfg, args.covariate, args.bandwidth, args.focal)
        elif cmd == "adjust":
            adj = adjust_z_local(ds, args.covariate, args.window)
            table = {"id": adj.ids, "z": adj.z, "z_raw": ds.z}
            table.update({k: v for k, v in ds.covariates.items()})
            if ds.labels is not None:
                table["class"] = ds.labels
            report = Report(tables={"adjusted": table},
                            manifest={"covariate": args.covariate, "window": args.window})
            if plots:
                out.mkdir(parents=True, exist_ok=True)
                _figure(report, out, "adjustment", plotting.plot_adjustment,
                        ds.covariates[args.covariate], ds.z, adj.z)
        elif cmd == "diagnose":
            report = analysis.diagnose_analysis(ds, cfg, args.label)
        else:  # pragma: no cover - argparse restricts choices
            raise UsageError(f"unknown command {cmd}")
    report.manifest["command"] = cmd
    report.manifest["config"] = cfg.to_dict()
    export_report(report, out)
    print(f"covfdr {cmd}: wrote {len(report.tables)} tables to {out}")
    return EXIT_OK


def _simulate(args, cfg: AnalysisConfig, out: Path, plots: bool) -> Report:
    from dataclasses import replace

    sim = replace(PRESETS[args.preset], seed=cfg.seed)
    checks = {"subclass", "poisson", "control", "jensen", "accuracy"} if "all" in args.checks else set(args.checks)
    report = Report(manifest={"preset": args.preset, "sim_config": sim.to_dict(), "reps": args.reps})
    if "subclass" in checks:
        study = replicate_subclass_study(sim, args.reps, null_mode=cfg.null_mode,
                                         basis=analysis.BASIS_NAMES[cfg.basis],
                                         central_fraction=cfg.central_fraction, workers=args.workers)
        report.tables["sd_curves"] = study.sd_table()
        report.tables["fdrA_band"] = study.band_table()
        report.tables["replications"] = {"rep": np.arange(study.n_ok), "p_A0_hat": study.p_A0_hat}
        report.manifest["subclass_study"] = study.summary()
        if plots:
            out.mkdir(parents=True, exist_ok=True)
            _figure(report, out, "sd_curves", plotting.plot_sd_curves, report.tables["sd_curves"])
            _figure(report, out, "fdrA_band", plotting.plot_fdrA_band, study.grid, study.fdrA,
                    study.true_fdrA, study.true_fdr)
    if "poisson" in checks:
        report.manifest["poisson"] = poisson_model_checks(PoissonSimConfig(seed=cfg.seed), max(args.reps, 1000)).as_dict()
    if "control" in checks:
        res = combined_control_check(sim, cfg.q, args.reps, workers=args.workers)
        report.manifest["control"] = {k: v.as_dict() for k, v in res.items()}
    if "jensen" in checks:
        rows = {"z": None}
        for loss in ("gini", "entropy"):
            j = jensen_information_check(loss=loss)
            rows["z"] = j.grid
            rows[f"{loss}_combined"] = j.combined_risk
            rows[f"{loss}_separate"] = j.separate_risk
            report.manifest[f"jensen_{loss}_holds"] = j.holds
        report.tables["jensen"] = rows
    if "accuracy" in checks:
        acc = accuracy_simulation(seed=cfg.seed, R=max(args.reps, 200))
        report.manifest["accuracy"] = {"mean_D": acc.mean_D, "se_mean_D": acc.se_mean_D,
                                       "CV": acc.CV, "se_CV": acc.se_CV, "R": acc.R}
    return report


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return run(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"covfdr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"covfdr: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FitError as exc:
        print(f"covfdr: fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT


if __name__ == "__main__":
    sys.exit(main())
