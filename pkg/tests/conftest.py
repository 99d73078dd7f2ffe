import numpy as np
import pytest

from covfdr import Dataset
from covfdr.density import BinSpec, bin_counts, fit_mixture_density, theoretical_null
from covfdr.fdr import local_fdr_curve

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """Store a criterion's outcome for the terminal summary, then return it."""

    def _record(n: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE[n] = (bool(passed), detail)
        print(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def mixture_data(rng):
    """5000 z-values, 10% nonnull at N(2.5, 1), with truth."""
    N = 5000
    null = rng.random(N) < 0.9
    z = rng.standard_normal(N) + np.where(null, 0.0, 2.5)
    return Dataset.from_arrays(z, is_null=null.astype(float))


@pytest.fixture
def mixture_fit(mixture_data):
    z = mixture_data.z
    bc = bin_counts(z, BinSpec.for_data(z))
    return local_fdr_curve(theoretical_null(), fit_mixture_density(bc))


class ExactDensity:
    """Stand-in for a fitted density with a known closed form."""

    def __init__(self, pdf):
        self._pdf = pdf

    def pdf(self, z):
        return self._pdf(np.atleast_1d(np.asarray(z, dtype=float)))
