"""Generative two-class models, closed-form oracles and Monte Carlo replication studies."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import optimize, special, stats

from .core import DataError, Dataset, FitError
from .density import BinSpec, bin_counts, fit_empirical_null, fit_mixture_density, theoretical_null
from .fdr import bh_reject_pvalues, local_fdr_curve, null_pvalues
from .separate import fit_class_prob_curve, null_class_prob_curve, subclass_fdr_curve


def replication_seed(base_seed: int, r: int) -> np.random.SeedSequence:
    """Seed for replication ``r``; depends only on ``(base_seed, r)``."""
    return np.random.SeedSequence([int(base_seed), int(r)])


@dataclass(frozen=True)
class TwoClassSimConfig:
    """Two classes, each a two-groups mixture of normal null and nonnull arms.

    The defaults are the small-subclass example: 5000 cases, 1% in class A, half
    of class A nonnull at N(2.5, 1), class B entirely null.

    ``composition="random"`` draws the class sizes as Binomial(N, pi_A) and each
    case's null status as Bernoulli. ``"fixed"`` uses the expected counts,
    rounded, so only the z-values vary between replications.
    """

    N: int = 5000
    pi_A: float = 0.01
    p_A0: float = 0.5
    p_B0: float = 1.0
    null_A: tuple[float, float] = (0.0, 1.0)
    null_B: tuple[float, float] = (0.0, 1.0)
    alt_A: tuple[float, float] | None = (2.5, 1.0)
    alt_B: tuple[float, float] | None = None
    seed: int = 0
    composition: str = "random"

    def __post_init__(self):
        if self.composition not in ("random", "fixed"):
            raise ValueError("composition must be 'random' or 'fixed'")
        for name in ("pi_A", "p_A0", "p_B0"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must be a probability")
        if self.p_A0 <= 0 or self.p_B0 <= 0:
            raise ValueError("null proportions must be positive")
        if self.p_A0 < 1 and self.alt_A is None:
            raise ValueError("alt_A required when p_A0 < 1")
        if self.p_B0 < 1 and self.alt_B is None:
            raise ValueError("alt_B required when p_B0 < 1")
        if self.N < 1:
            raise ValueError("N must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TwoClassSimConfig":
        d = dict(d)
        for key in ("null_A", "null_B", "alt_A", "alt_B"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


PRESETS = {
    "two_class": TwoClassSimConfig(),
    # exactly 50 class-A cases, 25 of them nonnull
    "two_class_fixed": TwoClassSimConfig(composition="fixed"),
}


def _fixed_composition(cfg: TwoClassSimConfig) -> tuple[np.ndarray, np.ndarray]:
    N_A = int(round(cfg.N * cfg.pi_A))
    in_A = np.zeros(cfg.N, dtype=bool)
    in_A[:N_A] = True
    is_null = np.ones(cfg.N, dtype=bool)
    n_A1 = int(round(N_A * (1 - cfg.p_A0)))
    n_B1 = int(round((cfg.N - N_A) * (1 - cfg.p_B0)))
    is_null[:n_A1] = False
    is_null[N_A:N_A + n_B1] = False
    return in_A, is_null


def simulate_two_class(cfg: TwoClassSimConfig, rng: np.random.Generator | None = None) -> Dataset:
    """Draw one dataset; labels are ``"A"``/``"B"`` and null truth is recorded."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    if cfg.composition == "fixed":
        in_A, is_null = _fixed_composition(cfg)
    else:
        N_A = int(rng.binomial(cfg.N, cfg.pi_A))
        in_A = np.zeros(cfg.N, dtype=bool)
        in_A[:N_A] = True
        is_null = rng.random(cfg.N) < np.where(in_A, cfg.p_A0, cfg.p_B0)
    mean = np.empty(cfg.N)
    sd = np.empty(cfg.N)
    for mask, arm in (
        (in_A & is_null, cfg.null_A),
        (in_A & ~is_null, cfg.alt_A),
        (~in_A & is_null, cfg.null_B),
        (~in_A & ~is_null, cfg.alt_B),
    ):
        if mask.any():
            mean[mask], sd[mask] = arm
    z = mean + sd * rng.standard_normal(cfg.N)
    width = len(str(cfg.N - 1))
    ids = np.array([f"c{i:0{width}d}" for i in range(cfg.N)], dtype=object)
    labels = np.where(in_A, "A", "B").astype(object)
    return Dataset(ids=ids, z=z, labels=labels, is_null=is_null.astype(float))


class TwoClassOracle:
    """Exact densities and false discovery rates of a normal two-class model."""

    def __init__(self, cfg: TwoClassSimConfig):
        self.cfg = cfg
        self.pi_A = cfg.pi_A
        self.pi_B = 1 - cfg.pi_A
        self.p0 = cfg.pi_A * cfg.p_A0 + self.pi_B * cfg.p_B0

    @staticmethod
    def _arm(arm, kind, z):
        if arm is None:
            return np.zeros_like(z)
        dist = stats.norm(*arm)
        return {"pdf": dist.pdf, "cdf": dist.cdf, "sf": dist.sf}[kind](z)

    def _class_parts(self, cls: str, z, kind: str):
        z = np.asarray(z, dtype=float)
        c = self.cfg
        if cls == "A":
            p_null, null, alt = c.p_A0, c.null_A, c.alt_A
        else:
            p_null, null, alt = c.p_B0, c.null_B, c.alt_B
        return p_null * self._arm(null, kind, z), (1 - p_null) * self._arm(alt, kind, z)

    def f_class(self, cls, z, kind="pdf"):
        n, a = self._class_parts(cls, z, kind)
        return n + a

    def f(self, z, kind="pdf"):
        return self.pi_A * self.f_class("A", z, kind) + self.pi_B * self.f_class("B", z, kind)

    def f0(self, z, kind="pdf"):
        """Combined null density (or tail) including the class mixing, divided by p0."""
        nA, _ = self._class_parts("A", z, kind)
        nB, _ = self._class_parts("B", z, kind)
        return (self.pi_A * nA + self.pi_B * nB) / self.p0

    def fdr(self, z):
        return self.p0 * self.f0(z) / self.f(z)

    def fdr_class(self, cls, z, kind="pdf"):
        n, a = self._class_parts(cls, z, kind)
        return n / (n + a)

    def Fdr(self, z, direction="right"):
        kind = "cdf" if direction == "left" else "sf"
        return self.p0 * self.f0(z, kind) / self.f(z, kind)

    def pi_A_z(self, z, kind="pdf"):
        return self.pi_A * self.f_class("A", z, kind) / self.f(z, kind)

    def pi_A0_z(self, z, kind="pdf"):
        nA, _ = self._class_parts("A", z, kind)
        nB, _ = self._class_parts("B", z, kind)
        return self.pi_A * nA / (self.pi_A * nA + self.pi_B * nB)

    def fdr_A_uncorrected(self, z):
        """``fdr(z) pi_A / pi_A(z)``, capped at 1: the class rate without the p_A0/p0 factor."""
        return np.minimum(1.0, self.fdr(z) * self.pi_A / self.pi_A_z(z))


def _one_subclass_rep(args):
    cfg, r, grid, null_mode, degree, basis, central_fraction = args
    rng = np.random.default_rng(replication_seed(cfg.seed, r))
    ds = simulate_two_class(cfg, rng)
    in_A = ds.labels == "A"
    try:
        spec = BinSpec.for_data(ds.z)
        bc = bin_counts(ds.z, spec, in_class=in_A)
        dens = fit_mixture_density(bc, degree)
        if null_mode == "empirical":
            null = fit_empirical_null(ds.z, central_fraction)
        else:
            null = theoretical_null(ds.z)
        curve = local_fdr_curve(null, dens)
        pa = fit_class_prob_curve(bc, basis)
        pa0 = null_class_prob_curve(in_A.mean())
        rep = subclass_fdr_curve(curve, pa, pa0, "none", z_A=ds.z[in_A], grid=grid)
    except (FitError, DataError, np.linalg.LinAlgError) as exc:
        return {"ok": False, "error": str(exc)}
    log_fdr = np.log(curve.null.p0 * curve.null.pdf(grid)) - dens.log_pdf(grid)
    log_R = np.log(rep.R_A)
    return {
        "ok": True,
        "log_fdr": log_fdr,
        "log_R": log_R,
        "log_fdrA": log_fdr + log_R,
        "fdrA": rep.fdr_A,
        "fdr": rep.fdr_combined,
        "sd_delta_fdr": rep.sd_log_fdr_combined,
        "sd_delta_R": rep.sd_log_R_A,
        "sd_delta_fdrA": rep.sd_log_fdr_A,
        "p_A0_hat": rep.p_A0_hat,
        "N_A": int(in_A.sum()),
        "p0_hat": curve.null.p0,
    }


def _map(fn: Callable, items: list, workers: int) -> list:
    if workers <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class SubclassStudy:
    """Per-replication curves from the subclass pipeline and their summaries."""

    cfg: TwoClassSimConfig
    grid: np.ndarray
    log_fdr: np.ndarray
    log_R: np.ndarray
    log_fdrA: np.ndarray
    fdrA: np.ndarray
    sd_delta_fdr: np.ndarray
    sd_delta_R: np.ndarray
    sd_delta_fdrA: np.ndarray
    p_A0_hat: np.ndarray
    n_failed: int
    errors: list[str] = field(default_factory=list)
    null_mode: str = "empirical"

    @property
    def n_ok(self) -> int:
        return int(self.log_fdr.shape[0])

    @property
    def failure_rate(self) -> float:
        return self.n_failed / (self.n_failed + self.n_ok)

    @property
    def sd_log_fdr(self) -> np.ndarray:
        return self.log_fdr.std(axis=0, ddof=1)

    @property
    def sd_log_R(self) -> np.ndarray:
        return self.log_R.std(axis=0, ddof=1)

    @property
    def sd_log_fdrA(self) -> np.ndarray:
        return self.log_fdrA.std(axis=0, ddof=1)

    @property
    def sd_ratio(self) -> np.ndarray:
        return self.sd_log_fdrA / self.sd_log_fdr

    def sd_ratio_at(self, z: float) -> float:
        return float(np.interp(z, self.grid, self.sd_ratio))

    @property
    def mean_fdrA(self) -> np.ndarray:
        return self.fdrA.mean(axis=0)

    @property
    def true_fdrA(self) -> np.ndarray:
        return TwoClassOracle(self.cfg).fdr_A_uncorrected(self.grid)

    @property
    def true_fdr(self) -> np.ndarray:
        return TwoClassOracle(self.cfg).fdr(self.grid)

    def summary(self) -> dict:
        i25 = int(np.argmin(np.abs(self.grid - 2.5)))
        return {
            "replications": self.n_ok,
            "failures": self.n_failed,
            "failure_rate": self.failure_rate,
            "null_mode": self.null_mode,
            "sd_ratio_at_2.5": float(self.sd_ratio[i25]),
            "max_sd_ratio": float(np.max(self.sd_ratio)),
            "naive_ratio": float(1 / np.sqrt(self.cfg.pi_A)),
            "p_A0_hat_mean": float(np.mean(self.p_A0_hat)),
            "p_A0_hat_sd": float(np.std(self.p_A0_hat, ddof=1)),
            "max_abs_band_error": float(np.max(np.abs(self.mean_fdrA - self.true_fdrA))),
        }

    def sd_table(self) -> dict[str, np.ndarray]:
        return {
            "z": self.grid,
            "sd_log_fdr": self.sd_log_fdr,
            "sd_log_RA": self.sd_log_R,
            "sd_log_fdrA": self.sd_log_fdrA,
            "sd_ratio": self.sd_ratio,
            "delta_sd_log_fdr": self.sd_delta_fdr.mean(axis=0),
            "delta_sd_log_RA": self.sd_delta_R.mean(axis=0),
            "delta_sd_log_fdrA": self.sd_delta_fdrA.mean(axis=0),
        }

    def band_table(self) -> dict[str, np.ndarray]:
        return {
            "z": self.grid,
            "mean_fdrA": self.mean_fdrA,
            "q05_fdrA": np.quantile(self.fdrA, 0.05, axis=0),
            "q95_fdrA": np.quantile(self.fdrA, 0.95, axis=0),
            "true_fdrA": self.true_fdrA,
            "true_fdr": self.true_fdr,
        }


def replicate_subclass_study(
    cfg: TwoClassSimConfig = TwoClassSimConfig(),
    R: int = 100,
    grid=None,
    null_mode: str = "empirical",
    degree: int = 7,
    basis: str = "cubic",
    central_fraction: float = 0.8,
    workers: int = 1,
) -> SubclassStudy:
    """Run the full subclass pipeline on ``R`` simulated datasets.

    Each replication fits the mixture density, the null, the combined fdr, the
    cubic class curve, and ``fdr_A = fdr pi_A / pi_A(z)``. Failed fits are
    counted and excluded.
    """
    if R < 2:
        raise ValueError("need at least two replications")
    grid = np.round(np.arange(1.0, 4.0001, 0.1), 10) if grid is None else np.asarray(grid, float)
    args = [(cfg, r, grid, null_mode, degree, basis, central_fraction) for r in range(R)]
    results = _map(_one_subclass_rep, args, workers)
    ok = [res for res in results if res["ok"]]
    if len(ok) < 2:
        raise FitError("too few successful replications")
    stack = lambda key: np.array([res[key] for res in ok])  # noqa: E731
    return SubclassStudy(
        cfg=cfg, grid=grid,
        log_fdr=stack("log_fdr"), log_R=stack("log_R"), log_fdrA=stack("log_fdrA"),
        fdrA=stack("fdrA"), sd_delta_fdr=stack("sd_delta_fdr"), sd_delta_R=stack("sd_delta_R"),
        sd_delta_fdrA=stack("sd_delta_fdrA"), p_A0_hat=stack("p_A0_hat"),
        n_failed=len(results) - len(ok),
        errors=[res["error"] for res in results if not res["ok"]],
        null_mode=null_mode,
    )


# ---------------------------------------------------------------------------
# Poisson model for Fdr-bar and Fdp


@dataclass(frozen=True)
class PoissonSimConfig:
    """Expected null and nonnull counts ``e0``, ``e1`` inside a fixed region.

    Under a Poisson total count with independent z-values the region's null and
    nonnull counts are independent Poisson variates, so ``mu`` only matters
    through ``e0`` and ``e1``; it is kept for bookkeeping.
    """

    e0: float = 10.0
    e1: float = 90.0
    mu: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.e0 < 0 or self.e1 < 0:
            raise ValueError("expected counts must be nonnegative")
        if self.e0 + self.e1 < 10:
            raise ValueError("need e0 + e1 >= 10")

    @property
    def e(self) -> float:
        return self.e0 + self.e1

    @property
    def Fdr(self) -> float:
        return self.e0 / self.e


@dataclass(frozen=True)
class PoissonCheck:
    cfg: PoissonSimConfig
    R: int
    n_used: int
    n_empty: int
    mean_Fdrbar: float
    se_Fdrbar: float
    mean_Fdp: float
    se_Fdp: float

    @property
    def predicted_Fdrbar(self) -> float:
        return self.cfg.Fdr * (1 + 1 / self.cfg.e)

    @property
    def predicted_Fdp(self) -> float:
        return self.cfg.Fdr

    @property
    def z_Fdrbar(self) -> float:
        return (self.mean_Fdrbar - self.predicted_Fdrbar) / self.se_Fdrbar if self.se_Fdrbar > 0 else 0.0

    @property
    def z_Fdp(self) -> float:
        return (self.mean_Fdp - self.predicted_Fdp) / self.se_Fdp if self.se_Fdp > 0 else 0.0

    @property
    def relative_bias(self) -> float:
        """``E{Fdr-bar}/Fdr - 1``, about ``1/e``."""
        return self.mean_Fdrbar / self.cfg.Fdr - 1

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "R", "n_used", "n_empty", "mean_Fdrbar", "se_Fdrbar", "mean_Fdp", "se_Fdp",
            "predicted_Fdrbar", "predicted_Fdp", "z_Fdrbar", "z_Fdp")}
        out["config"] = asdict(self.cfg)
        return out


def poisson_model_checks(cfg: PoissonSimConfig, R: int = 10_000) -> PoissonCheck:
    """Monte Carlo means of ``Fdr-bar = e0/N`` and ``Fdp = N0/N`` over ``R`` draws.

    Draws with an empty region (N = 0) have neither quantity defined and are
    excluded; their number is reported.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 8]))
    N0 = rng.poisson(cfg.e0, R)
    N1 = rng.poisson(cfg.e1, R)
    N = N0 + N1
    keep = N > 0
    fdrbar = cfg.e0 / N[keep]
    fdp = N0[keep] / N[keep]
    n = int(keep.sum())
    se = lambda a: float(a.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")  # noqa: E731
    return PoissonCheck(
        cfg=cfg, R=R, n_used=n, n_empty=R - n,
        mean_Fdrbar=float(fdrbar.mean()), se_Fdrbar=se(fdrbar),
        mean_Fdp=float(fdp.mean()), se_Fdp=se(fdp),
    )


# ---------------------------------------------------------------------------
# Combined control of separate rules


def fdrbar_threshold(oracle: "TwoClassOracle", cls: str, q: float, N_cls: float,
                     direction: str = "right") -> float:
    """Threshold solving ``Fdr_X(z) (1 + 1/e_X(z)) = q`` for class ``cls``.

    ``e_X(z)`` is the expected class count beyond ``z``. Returns the least
    extreme solution, or ``inf`` (``-inf`` for left tails) when there is none.
    """
    kind = "sf" if direction == "right" else "cdf"

    def g(z):
        n, a = oracle._class_parts(cls, z, kind)
        tot = n + a
        e = N_cls * tot
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(e > 0, n / tot * (1 + 1 / e), np.inf) - q

    grid = np.arange(-8.0, 12.0, 0.01)
    vals = g(grid)
    ok = np.flatnonzero(vals <= 0)
    if ok.size == 0:
        return float("inf") if direction == "right" else float("-inf")
    if direction == "right":
        j = ok[0]
        if j == 0:
            return float(grid[0])
        return float(optimize.brentq(lambda t: float(g(t)), grid[j - 1], grid[j], xtol=1e-12))
    j = ok[-1]
    if j == grid.size - 1:
        return float(grid[-1])
    return float(optimize.brentq(lambda t: float(g(t)), grid[j], grid[j + 1], xtol=1e-12))


@dataclass(frozen=True)
class ControlCheck:
    rule: str
    q: float
    R: int
    mean_Fdp: float
    se_Fdp: float
    mean_rejections: float
    thresholds: dict

    @property
    def bound(self) -> float:
        return self.q + 2 * self.se_Fdp

    @property
    def controlled(self) -> bool:
        return self.mean_Fdp <= self.bound

    def as_dict(self) -> dict:
        d = asdict(self)
        d.update(bound=self.bound, controlled=self.controlled)
        return d


def _combined_fdp(rejected: np.ndarray, is_null: np.ndarray) -> float:
    n = np.count_nonzero(rejected)
    return float(is_null[rejected].sum() / n) if n else 0.0


def _control_rep(args):
    cfg, r, q, direction, z_thr = args
    rng = np.random.default_rng(replication_seed(cfg.seed, r))
    ds = simulate_two_class(cfg, rng)
    is_null = ds.is_null.astype(bool)
    rej_bh = np.zeros(ds.N, dtype=bool)
    rej_bar = np.zeros(ds.N, dtype=bool)
    null = theoretical_null()
    for cls in ("A", "B"):
        m = ds.labels == cls
        if not m.any():
            continue
        p = null_pvalues(ds.z[m], null, direction)
        rej_bh[m] = bh_reject_pvalues(p, q)
        t = z_thr[cls]
        rej_bar[m] = ds.z[m] >= t if direction == "right" else ds.z[m] <= t
    return (_combined_fdp(rej_bh, is_null), int(rej_bh.sum()),
            _combined_fdp(rej_bar, is_null), int(rej_bar.sum()))


def combined_control_check(
    cfg: TwoClassSimConfig = TwoClassSimConfig(), q: float = 0.1, R: int = 500,
    direction: str = "right", workers: int = 1,
) -> dict[str, ControlCheck]:
    """Mean combined Fdp when each class is thresholded separately at rate ``q``.

    Two rules are run on the same replications: Benjamini-Hochberg within each
    class (theoretical null, p0 = 1), and fixed oracle thresholds calibrated so
    that ``E{Fdr-bar_X} = q`` in each class. The combined Fdp pools false and
    total rejections across classes and is 0 when nothing is rejected.
    """
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    oracle = TwoClassOracle(cfg)
    z_thr = {
        "A": fdrbar_threshold(oracle, "A", q, cfg.N * cfg.pi_A, direction),
        "B": fdrbar_threshold(oracle, "B", q, cfg.N * (1 - cfg.pi_A), direction),
    }
    res = np.array(_map(_control_rep, [(cfg, r, q, direction, z_thr) for r in range(R)], workers))
    out = {}
    for name, col in (("bh", 0), ("fdrbar", 2)):
        fdp = res[:, col]
        out[name] = ControlCheck(
            rule=name, q=q, R=R, mean_Fdp=float(fdp.mean()),
            se_Fdp=float(fdp.std(ddof=1) / np.sqrt(R)),
            mean_rejections=float(res[:, col + 1].mean()),
            thresholds=z_thr if name == "fdrbar" else {},
        )
    return out


# ---------------------------------------------------------------------------
# Exact oracle checks


def _loss(name: str):
    if name == "gini":
        return lambda p: p * (1 - p)
    if name == "entropy":
        return lambda p: special.entr(p) + special.entr(1 - p)
    raise ValueError("loss must be 'gini' or 'entropy'")


@dataclass(frozen=True)
class JensenCheck:
    loss: str
    grid: np.ndarray
    combined_risk: np.ndarray
    separate_risk: np.ndarray

    @property
    def gap(self) -> np.ndarray:
        return self.combined_risk - self.separate_risk

    @property
    def holds(self) -> bool:
        return bool(np.all(self.gap >= -1e-12))


def jensen_information_check(oracle=None, loss: str = "gini", grid=None) -> JensenCheck:
    """Compare ``q(fdr(z))`` with ``pi_A(z) q(fdr_A(z)) + pi_B(z) q(fdr_B(z))``.

    ``q`` is the Gini ``p(1 - p)`` or the binary entropy. Concavity of ``q``
    makes the first at least as large as the second.
    """
    oracle = TwoClassOracle(TwoClassSimConfig()) if oracle is None else oracle
    grid = np.round(np.arange(-4.0, 4.0001, 0.1), 10) if grid is None else np.asarray(grid, float)
    q = _loss(loss)
    piA = oracle.pi_A_z(grid)
    sep = piA * q(oracle.fdr_class("A", grid)) + (1 - piA) * q(oracle.fdr_class("B", grid))
    return JensenCheck(loss=loss, grid=grid, combined_risk=q(oracle.fdr(grid)), separate_risk=sep)


class DiscreteCovariateOracle:
    """Normal two-groups models indexed by a covariate taking finitely many values.

    ``classes`` maps each covariate value to ``(prior, p0, null, alt)`` with
    ``null`` and ``alt`` given as ``(mean, sd)``; ``alt`` may be None when
    ``p0 = 1``.
    """

    def __init__(self, classes: dict):
        self.labels = list(classes)
        priors = np.array([classes[x][0] for x in self.labels], dtype=float)
        if np.any(priors < 0) or not np.isclose(priors.sum(), 1.0, rtol=0, atol=1e-12):
            raise ValueError("class priors must be nonnegative and sum to one")
        self.classes = classes

    def prior(self, x) -> float:
        return float(self.classes[x][0])

    def p0_of(self, x) -> float:
        return float(self.classes[x][1])

    @property
    def p0(self) -> float:
        return float(sum(self.prior(x) * self.p0_of(x) for x in self.labels))

    def parts(self, x, z, kind: str = "pdf"):
        """Null and nonnull components ``p_x0 f_x0`` and ``p_x1 f_x1`` (or tails)."""
        z = np.asarray(z, dtype=float)
        _, p0, null, alt = self.classes[x]
        return p0 * TwoClassOracle._arm(null, kind, z), (1 - p0) * TwoClassOracle._arm(alt, kind, z)

    def f_x(self, x, z, kind="pdf"):
        n, a = self.parts(x, z, kind)
        return n + a

    def f(self, z, kind="pdf"):
        return sum(self.prior(x) * self.f_x(x, z, kind) for x in self.labels)

    def null_mass(self, z, kind="pdf"):
        return sum(self.prior(x) * self.parts(x, z, kind)[0] for x in self.labels)

    def fdr_x(self, x, z, kind="pdf"):
        n, a = self.parts(x, z, kind)
        return n / (n + a)

    def fdr(self, z, kind="pdf"):
        return self.null_mass(z, kind) / self.f(z, kind)

    def posterior(self, x, z, kind="pdf"):
        """``Prob{x | z}`` (or given the tail region for ``kind`` cdf/sf)."""
        return self.prior(x) * self.f_x(x, z, kind) / self.f(z, kind)

    def null_posterior(self, x, z, kind="pdf"):
        """``Prob_0{x | z}``: the class share among null cases at ``z``."""
        return self.prior(x) * self.parts(x, z, kind)[0] / self.null_mass(z, kind)

    def ratio(self, x, z, kind="pdf"):
        return self.null_posterior(x, z, kind) / self.posterior(x, z, kind)


@dataclass(frozen=True)
class SeparationCheck:
    q: float
    thresholds: dict
    class_Fdr: dict
    combined_Fdr: float
    combined_Fdr_mixture: float

    @property
    def error(self) -> float:
        return abs(self.combined_Fdr - self.q)


def bayes_separation_check(oracle: DiscreteCovariateOracle, q: float,
                           direction: str = "left") -> SeparationCheck:
    """Per-class thresholds with class tail Fdr equal to ``q``, then the combined Fdr.

    The combined rate is computed two ways: directly as pooled null tail mass
    over pooled tail mass, and as the posterior mixture of the class rates.
    """
    kind = "cdf" if direction == "left" else "sf"
    thr = {}
    for x in oracle.labels:
        g = lambda t, x=x: float(oracle.fdr_x(x, t, kind)) - q  # noqa: E731
        grid = np.linspace(-10.0, 10.0, 2001)
        vals = oracle.fdr_x(x, grid, kind) - q
        # least extreme crossing, scanning in from the rejection tail
        order = np.arange(grid.size) if direction == "left" else np.arange(grid.size)[::-1]
        cross = [j for j in zip(order[:-1], order[1:]) if vals[j[0]] * vals[j[1]] <= 0]
        if not cross:
            raise ValueError(f"class {x!r}: tail Fdr never equals q")
        i, j = cross[-1]
        lo, hi = sorted((grid[i], grid[j]))
        thr[x] = optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    tail = {x: oracle.prior(x) * float(oracle.f_x(x, thr[x], kind)) for x in oracle.labels}
    null = {x: oracle.prior(x) * float(oracle.parts(x, thr[x], kind)[0]) for x in oracle.labels}
    cls_fdr = {x: null[x] / tail[x] for x in oracle.labels}
    total = sum(tail.values())
    combined = sum(null.values()) / total
    mixture = sum(cls_fdr[x] * tail[x] / total for x in oracle.labels)
    return SeparationCheck(q=q, thresholds=thr, class_Fdr=cls_fdr,
                           combined_Fdr=combined, combined_Fdr_mixture=mixture)


@dataclass(frozen=True)
class CombinedBoundCheck:
    class_Fdr: dict
    expected_counts: dict
    combined_Fdr: float
    weighted_form: float
    q: float

    @property
    def bounded(self) -> bool:
        return self.combined_Fdr <= self.q + 1e-12


def combined_fdr_bound_check(oracle: DiscreteCovariateOracle, thresholds: dict, q: float,
                             mu: float = 1.0, direction: str = "left") -> CombinedBoundCheck:
    """Pooled Bayes Fdr of separate tail rules and its count-weighted form.

    With expected class tail counts ``e_x = mu pi_x F_x(z_x)`` the pooled rate is
    ``sum e_x0 / sum e_x``, which equals ``sum e_x Fdr_x / sum e_x`` and so cannot
    exceed ``q`` when every class rate is at most ``q``.
    """
    kind = "cdf" if direction == "left" else "sf"
    e = {x: mu * oracle.prior(x) * float(oracle.f_x(x, thresholds[x], kind)) for x in oracle.labels}
    e0 = {x: mu * oracle.prior(x) * float(oracle.parts(x, thresholds[x], kind)[0]) for x in oracle.labels}
    cls = {x: e0[x] / e[x] for x in oracle.labels}
    tot = sum(e.values())
    return CombinedBoundCheck(
        class_Fdr=cls, expected_counts=e, combined_Fdr=sum(e0.values()) / tot,
        weighted_form=sum(e[x] * cls[x] for x in oracle.labels) / tot, q=q,
    )


# ---------------------------------------------------------------------------
# Accuracy of Fdr-bar


@dataclass(frozen=True)
class AccuracySimulation:
    N: int
    F_z: float
    R: int
    D: np.ndarray
    mean_D: float
    se_mean_D: float
    CV: float
    se_CV: float


def accuracy_simulation(N: int = 5000, F_z: float = 0.01, R: int = 2000, seed: int = 0,
                        n_boot: int = 400) -> AccuracySimulation:
    """Monte Carlo distribution of ``D = Fdr-bar(z)/Fdr(z)`` for independent z-values.

    Each replication draws ``N`` independent N(0, 1) values and evaluates the
    ratio at the point ``z`` with ``F(z) = F_z``; ``D = N F_z / N(z)``.
    Replications with ``N(z) = 0`` would make ``D`` infinite and raise. The
    standard error of the CV comes from a seeded bootstrap.
    """
    ss = np.random.SeedSequence([int(seed), 5])
    rng = np.random.default_rng(ss)
    z0 = stats.norm.ppf(F_z)
    counts = np.array([np.count_nonzero(rng.standard_normal(N) <= z0) for _ in range(R)])
    if np.any(counts == 0):
        raise DataError("empty tail in a replication")
    D = N * F_z / counts
    cv = lambda a: a.std(ddof=1) / a.mean()  # noqa: E731
    brng = np.random.default_rng(ss.spawn(1)[0])
    boot = np.array([cv(D[brng.integers(0, R, R)]) for _ in range(n_boot)])
    return AccuracySimulation(
        N=N, F_z=F_z, R=R, D=D, mean_D=float(D.mean()),
        se_mean_D=float(D.std(ddof=1) / np.sqrt(R)), CV=float(cv(D)), se_CV=float(boot.std(ddof=1)),
    )
