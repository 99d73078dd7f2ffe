"""Shared domain types: cases, datasets, class partitions and relevance functions."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed input data (bad z-values, duplicate ids, missing columns)."""


class FitError(RuntimeError):
    """Raised when a statistical fit fails (non-convergence, degenerate design)."""


@dataclass(frozen=True)
class Case:
    """A single test unit."""

    id: str
    z: float
    covariates: Mapping[str, float] = field(default_factory=dict)
    class_label: str | None = None
    is_null_truth: bool | None = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented collection of cases.

    ``is_null`` holds 1.0 (null), 0.0 (nonnull) or NaN (unknown) per case, or
    is None when no truth is carried at all.
    """

    ids: np.ndarray
    z: np.ndarray
    covariates: Mapping[str, np.ndarray] = field(default_factory=dict)
    labels: np.ndarray | None = None
    is_null: np.ndarray | None = None

    @property
    def N(self) -> int:
        return int(self.z.shape[0])

    def __len__(self) -> int:
        return self.N

    @classmethod
    def from_cases(cls, cases: Iterable[Case]) -> "Dataset":
        cases = list(cases)
        ids = np.array([str(c.id) for c in cases], dtype=object)
        z = np.array([c.z for c in cases], dtype=float)
        names = sorted({k for c in cases for k in c.covariates})
        covariates = {
            name: np.array([c.covariates.get(name, np.nan) for c in cases], dtype=float)
            for name in names
        }
        labels = None
        if any(c.class_label is not None for c in cases):
            labels = np.array([c.class_label for c in cases], dtype=object)
        is_null = None
        if any(c.is_null_truth is not None for c in cases):
            is_null = np.array(
                [np.nan if c.is_null_truth is None else float(c.is_null_truth) for c in cases]
            )
        return cls(ids=ids, z=z, covariates=covariates, labels=labels, is_null=is_null)

    @classmethod
    def from_arrays(
        cls,
        z: Sequence[float],
        ids: Sequence[str] | None = None,
        labels: Sequence[str | None] | None = None,
        covariates: Mapping[str, Sequence[float]] | None = None,
        is_null: Sequence[float] | None = None,
    ) -> "Dataset":
        z = np.asarray(z, dtype=float)
        if ids is None:
            ids = [f"c{i}" for i in range(z.shape[0])]
        return cls(
            ids=np.asarray(ids, dtype=object),
            z=z,
            covariates={k: np.asarray(v, dtype=float) for k, v in (covariates or {}).items()},
            labels=None if labels is None else np.asarray(labels, dtype=object),
            is_null=None if is_null is None else np.asarray(is_null, dtype=float),
        )

    def case(self, i: int) -> Case:
        truth = None
        if self.is_null is not None and not np.isnan(self.is_null[i]):
            truth = bool(self.is_null[i])
        return Case(
            id=str(self.ids[i]),
            z=float(self.z[i]),
            covariates={k: float(v[i]) for k, v in self.covariates.items()},
            class_label=None if self.labels is None else self.labels[i],
            is_null_truth=truth,
        )

    @property
    def cases(self) -> Iterator[Case]:
        for i in range(self.N):
            yield self.case(i)

    def index_of(self, case_id: str) -> int:
        hits = np.flatnonzero(self.ids == case_id)
        if hits.size == 0:
            raise DataError(f"unknown id {case_id!r}")
        return int(hits[0])

    def subset(self, mask: np.ndarray) -> "Dataset":
        mask = np.asarray(mask)
        return Dataset(
            ids=self.ids[mask],
            z=self.z[mask],
            covariates={k: v[mask] for k, v in self.covariates.items()},
            labels=None if self.labels is None else self.labels[mask],
            is_null=None if self.is_null is None else self.is_null[mask],
        )

    def with_z(self, z: np.ndarray, **extra_covariates: np.ndarray) -> "Dataset":
        covariates = dict(self.covariates)
        covariates.update(extra_covariates)
        return Dataset(
            ids=self.ids, z=np.asarray(z, dtype=float), covariates=covariates,
            labels=self.labels, is_null=self.is_null,
        )

    def label_set(self) -> set[str]:
        if self.labels is None:
            return set()
        return {lab for lab in self.labels if lab is not None}

    def class_counts(self) -> dict[str | None, int]:
        if self.labels is None:
            return {None: self.N}
        return dict(Counter(self.labels.tolist()))


def validate_dataset(raw: Dataset, label_set: Iterable[str] | None = None) -> Dataset:
    """Check finiteness, id uniqueness and label consistency.

    Returns the dataset unchanged (it is immutable), so validation is idempotent.
    """
    if raw.N < 1:
        raise DataError("empty dataset")
    if not np.all(np.isfinite(raw.z)):
        bad = raw.ids[~np.isfinite(raw.z)][0]
        raise DataError(f"non-finite z for case {bad!r}")
    if len(raw.ids) != raw.N:
        raise DataError("ids and z have different lengths")
    counts = Counter(raw.ids.tolist())
    dups = [k for k, v in counts.items() if v > 1]
    if dups:
        raise DataError(f"duplicate id {dups[0]!r}")
    for name, values in raw.covariates.items():
        if len(values) != raw.N:
            raise DataError(f"covariate {name!r} has wrong length")
    if raw.labels is not None:
        if len(raw.labels) != raw.N:
            raise DataError("labels have wrong length")
        if label_set is not None:
            allowed = set(label_set)
            extra = raw.label_set() - allowed
            if extra:
                raise DataError(f"undeclared class label {sorted(extra)[0]!r}")
    if raw.is_null is not None and len(raw.is_null) != raw.N:
        raise DataError("truth labels have wrong length")
    return raw


@dataclass(frozen=True)
class ClassPartition:
    label_A: str
    indices_A: np.ndarray
    indices_B: np.ndarray
    N: int

    @property
    def pi_A(self) -> float:
        return len(self.indices_A) / self.N

    @property
    def pi_B(self) -> float:
        return len(self.indices_B) / self.N

    @property
    def mask_A(self) -> np.ndarray:
        mask = np.zeros(self.N, dtype=bool)
        mask[self.indices_A] = True
        return mask


def partition_by_class(ds: Dataset, label: str) -> ClassPartition:
    """Split ``ds`` into class ``label`` (A) and everything else (B)."""
    if ds.labels is None or label not in ds.label_set():
        raise DataError(f"unknown label {label!r}")
    mask = ds.labels == label
    idx_A = np.flatnonzero(mask)
    idx_B = np.flatnonzero(~mask)
    if idx_B.size == 0:
        raise DataError("empty class B")
    return ClassPartition(label_A=label, indices_A=idx_A, indices_B=idx_B, N=ds.N)


def partition_by_mask(mask: np.ndarray, label: str = "A") -> ClassPartition:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DataError("empty class A")
    if mask.all():
        raise DataError("empty class B")
    return ClassPartition(
        label_A=label, indices_A=np.flatnonzero(mask), indices_B=np.flatnonzero(~mask), N=mask.size
    )


@dataclass(frozen=True)
class RelevanceFunction:
    """Relevance of a case with covariate value x to a focal case.

    ``kind="indicator"`` gives 1 for cases sharing the focal case's class label and
    0 otherwise. ``kind="kernel"`` gives ``1 / (1 + |x - x_focal| / bandwidth)``.
    """

    kind: str
    covariate: str | None = None
    bandwidth: float = 10.0
    label: str | None = None

    def __post_init__(self):
        if self.kind not in ("indicator", "kernel"):
            raise ValueError(f"unknown relevance kind {self.kind!r}")
        if self.kind == "kernel" and (self.covariate is None or self.bandwidth <= 0):
            raise ValueError("kernel relevance needs a covariate and a positive bandwidth")

    def weights(self, ds: Dataset, focal: int) -> np.ndarray:
        """Relevance rho_focal(x_j) for every case j."""
        if self.kind == "indicator":
            if ds.labels is None:
                raise DataError("indicator relevance needs class labels")
            label = self.label if self.label is not None else ds.labels[focal]
            return (ds.labels == label).astype(float)
        if self.covariate not in ds.covariates:
            raise DataError(f"missing covariate {self.covariate!r}")
        x = ds.covariates[self.covariate]
        return 1.0 / (1.0 + np.abs(x - x[focal]) / self.bandwidth)
