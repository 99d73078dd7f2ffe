"""Table and gene-set ingestion, local z adjustment, and report export."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field, fields
from importlib import metadata
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import DataError, Dataset, validate_dataset

NULL_MODES = ("theoretical", "empirical")


@dataclass
class AnalysisConfig:
    """Everything needed to rerun an analysis from its input file."""

    input_path: str | None = None
    z_column: str = "z"
    id_column: str = "id"
    covariate_columns: list[str] | None = None
    class_column: str | None = None
    set_file: str | None = None
    null_mode: str = "theoretical"
    q: float = 0.1
    bins: int | None = None
    bin_range: tuple[float, float] | None = None
    degree: int = 7
    central_fraction: float = 0.8
    basis: str = "cubic"
    correction: str = "none"
    seed: int = 0
    output_dir: str = "covfdr_out"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.q < 1:
            raise ValueError("q must lie in (0, 1)")
        if self.null_mode not in NULL_MODES:
            raise ValueError(f"null_mode must be one of {NULL_MODES}")

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["bin_range"] is not None:
            d["bin_range"] = list(d["bin_range"])
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "AnalysisConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if d.get("bin_range") is not None:
            d["bin_range"] = tuple(d["bin_range"])
        return cls(**d)


def _delimiter(path: Path, sample: str) -> str:
    if path.suffix.lower() in (".tsv", ".tab"):
        return "\t"
    if path.suffix.lower() == ".csv":
        return ","
    try:
        return csv.Sniffer().sniff(sample, delimiters=",\t;").delimiter
    except csv.Error:
        return ","


def _parse_float(value: str, column: str, row: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise DataError(f"unparseable number {value!r} in column {column!r} (row {row})") from None


def load_table(path: str | os.PathLike, config: AnalysisConfig | None = None) -> Dataset:
    """Read a delimited table with a header into a Dataset.

    The z column is required. The id column is optional (rows are numbered
    ``r1, r2, ...`` when it is absent). The class column defaults to ``class``
    when present; an empty class cell means no label. Covariates default to
    every remaining column.
    """
    cfg = config or AnalysisConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    if not text.strip():
        raise DataError("empty file")
    reader = csv.reader(text.splitlines(), delimiter=_delimiter(path, text[:4096]))
    rows = [r for r in reader if r and any(c.strip() for c in r)]
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DataError("empty file")
    col = {name: i for i, name in enumerate(header)}
    if cfg.z_column not in col:
        raise DataError(f"missing column {cfg.z_column}")
    class_col = cfg.class_column
    if class_col is None and "class" in col:
        class_col = "class"
    if class_col is not None and class_col not in col:
        raise DataError(f"missing column {class_col}")
    id_col = cfg.id_column if cfg.id_column in col else None
    if cfg.covariate_columns is None:
        taken = {cfg.z_column, class_col, id_col}
        covs = [h for h in header if h not in taken]
    else:
        covs = list(cfg.covariate_columns)
        for c in covs:
            if c not in col:
                raise DataError(f"missing column {c}")

    def cell(r, name, k):
        i = col[name]
        if i >= len(r):
            raise DataError(f"row {k} is too short")
        return r[i].strip()

    z = [_parse_float(cell(r, cfg.z_column, k), cfg.z_column, k) for k, r in enumerate(body, 1)]
    ids = [cell(r, id_col, k) for k, r in enumerate(body, 1)] if id_col else [f"r{k}" for k in range(1, len(body) + 1)]
    labels = None
    if class_col is not None:
        labels = [cell(r, class_col, k) or None for k, r in enumerate(body, 1)]
    cov = {c: [_parse_float(cell(r, c, k), c, k) for k, r in enumerate(body, 1)] for c in covs}
    return validate_dataset(Dataset.from_arrays(z, ids=ids, labels=labels, covariates=cov))


def load_gene_sets(path: str | os.PathLike) -> dict[str, list[str]]:
    """Parse ``NAME<TAB>id1,id2,...`` lines into a name -> ids map."""
    sets: dict[str, list[str]] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    for k, line in enumerate(lines, 1):
        if not line.strip() or line.startswith("#"):
            continue
        name, sep, members = line.partition("\t")
        if not sep:
            raise DataError(f"gene-set line {k} has no tab separator")
        sets[name.strip()] = [m.strip() for m in members.split(",") if m.strip()]
    if not sets:
        raise DataError("empty file")
    return sets


def load_id_list(path: str | os.PathLike) -> list[str]:
    """Case ids, one per line or comma separated; a single gene-set line also works."""
    text = Path(path).read_text(encoding="utf-8")
    if "\t" in text:
        sets = load_gene_sets(path)
        return [i for ids in sets.values() for i in ids]
    ids = [t.strip() for t in text.replace(",", "\n").splitlines() if t.strip()]
    if not ids:
        raise DataError("empty file")
    return ids


def _nearest_blocks(x_sorted: np.ndarray, window: int) -> np.ndarray:
    """Start index of the ``window`` nearest neighbours of each sorted point."""
    N = x_sorted.size
    i = np.arange(N)
    starts = np.clip(i[:, None] - np.arange(window)[None, :], 0, N - window)
    reach = np.maximum(x_sorted[:, None] - x_sorted[starts],
                       x_sorted[starts + window - 1] - x_sorted[:, None])
    return starts[i, np.argmin(reach, axis=1)]


def adjust_z_local(ds: Dataset, covariate: str, window: int = 200) -> Dataset:
    """Standardize z by the local median and half the 16%-84% spread.

    For every case the statistics are taken over the ``window`` cases nearest
    in ``covariate``. The returned dataset holds the adjusted z and keeps the
    raw values as the covariate ``z_raw``.
    """
    if covariate not in ds.covariates:
        raise DataError(f"missing covariate {covariate!r}")
    if window < 20:
        raise DataError("window must be at least 20")
    if window > ds.N:
        raise DataError(f"window {window} exceeds the number of cases {ds.N}")
    x = ds.covariates[covariate]
    order = np.argsort(x, kind="stable")
    starts = _nearest_blocks(x[order], window)
    z_sorted = ds.z[order]
    block = z_sorted[starts[:, None] + np.arange(window)[None, :]]
    q16, med, q84 = np.percentile(block, [16, 50, 84], axis=1)
    spread = (q84 - q16) / 2
    if np.any(spread <= 0):
        raise DataError("zero local spread")
    z_adj = np.empty(ds.N)
    z_adj[order] = (z_sorted - med) / spread
    return ds.with_z(z_adj, z_raw=ds.z)


# ---------------------------------------------------------------------------
# export


@dataclass
class Report:
    """Named column tables plus a run manifest."""

    tables: dict[str, dict[str, Sequence]] = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)
    figures: list[str] = field(default_factory=list)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_table(path: str | os.PathLike, columns: Mapping[str, Sequence], delimiter: str = ",") -> None:
    names = list(columns)
    cols = [list(columns[n]) for n in names]
    lengths = {len(c) for c in cols}
    if len(lengths) > 1:
        raise ValueError("table columns differ in length")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def versions() -> dict[str, str]:
    from . import __version__

    out = {"covfdr": __version__}
    for pkg in ("numpy", "scipy", "matplotlib"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    return out


def export_report(report: Report, out_dir: str | os.PathLike, formats: Sequence[str] = ("csv", "json")) -> list[Path]:
    """Write each table as CSV and the manifest (plus tables, for ``json``) as JSON.

    Numbers are written with 17 significant digits so doubles round-trip. No
    timestamps are recorded, so identical inputs give identical files.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise DataError(f"cannot write to {out}: {exc.strerror}") from exc
    written = []
    if "csv" in formats:
        for name, cols in report.tables.items():
            p = out / f"{name}.csv"
            write_table(p, cols)
            written.append(p)
    manifest = dict(report.manifest)
    manifest.setdefault("versions", versions())
    manifest["tables"] = sorted(report.tables)
    if report.figures:
        manifest["figures"] = sorted(report.figures)
    p = out / "manifest.json"
    p.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    written.append(p)
    if "json" in formats:
        p = out / "tables.json"
        p.write_text(json.dumps(_jsonable(report.tables), indent=1, sort_keys=True) + "\n")
        written.append(p)
    return written


def load_manifest(path: str | os.PathLike) -> tuple[AnalysisConfig, dict]:
    """Read a manifest back; returns the config and the full manifest."""
    manifest = json.loads(Path(path).read_text())
    return AnalysisConfig.from_dict(manifest["config"]), manifest
