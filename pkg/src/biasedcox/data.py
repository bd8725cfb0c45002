"""Observation types, validation and CSV ingestion."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyDataset, InvariantViolation, MissingColumn, NoEvents, ParseError


@dataclass(frozen=True)
class SubjectRecord:
    a: float
    y: float
    delta: int
    z: tuple


@dataclass(frozen=True)
class Schema:
    """Column mapping for CSV ingestion; ``z=None`` means every ``z<k>`` column."""

    a: str = "a"
    y: str = "y"
    delta: str = "delta"
    z: tuple | None = None


def _check_row(row, a, y, delta, z):
    if not (np.isfinite(a) and np.isfinite(y)):
        raise InvariantViolation(row, "non-finite time")
    if a < 0:
        raise InvariantViolation(row, "a < 0")
    if a >= y:
        raise InvariantViolation(row, "a ≥ y")
    if delta not in (0, 1):
        raise InvariantViolation(row, "delta not in {0, 1}")
    if not np.all(np.isfinite(z)):
        raise InvariantViolation(row, "non-finite covariate")


class Dataset:
    """Immutable left-truncated, right-censored sample.

    Arrays are stored read-only: ``a`` (n,), ``y`` (n,), ``delta`` (n,) int,
    ``z`` (n, p).
    """

    __slots__ = ("a", "y", "delta", "z", "covariate_names")

    def __init__(self, a, y, delta, z, covariate_names: Sequence[str] | None = None, validate=True):
        a = np.array(a, dtype=float)
        y = np.array(y, dtype=float)
        delta = np.array(delta, dtype=np.int64)
        z = np.array(z, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        n = y.shape[0]
        if n == 0:
            raise EmptyDataset("dataset has no rows")
        if not (a.shape == y.shape == delta.shape == (n,)) or z.shape[0] != n:
            raise ValueError("array lengths disagree")
        if validate:
            for i in range(n):
                _check_row(i + 1, a[i], y[i], delta[i], z[i])
            if n < 2:
                raise EmptyDataset("need at least 2 subjects")
            if delta.sum() == 0:
                raise NoEvents("no observed failures")
        for arr in (a, y, delta, z):
            arr.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "z", z)
        names = tuple(covariate_names) if covariate_names else tuple(f"z{k + 1}" for k in range(z.shape[1]))
        object.__setattr__(self, "covariate_names", names)

    def __setattr__(self, name, value):
        raise AttributeError("Dataset is immutable")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.z.shape[1]

    @property
    def tau(self) -> float:
        return float(self.y.max())

    @property
    def v(self) -> np.ndarray:
        """Residual follow-up ``y - a`` (forward recurrence or residual censoring time)."""
        return self.y - self.a

    @property
    def records(self) -> list[SubjectRecord]:
        return [
            SubjectRecord(float(self.a[i]), float(self.y[i]), int(self.delta[i]), tuple(self.z[i].tolist()))
            for i in range(self.n)
        ]

    @classmethod
    def from_records(cls, records: Sequence[SubjectRecord], covariate_names=None) -> "Dataset":
        if not records:
            raise EmptyDataset("dataset has no rows")
        p = len(records[0].z)
        if any(len(r.z) != p for r in records):
            raise ValueError("records disagree on covariate dimension")
        return cls(
            [r.a for r in records],
            [r.y for r in records],
            [r.delta for r in records],
            np.array([r.z for r in records], dtype=float).reshape(len(records), p),
            covariate_names,
        )

    def scaled(self, c: float) -> "Dataset":
        """Rescale all times by ``c`` (covariates untouched)."""
        return Dataset(self.a * c, self.y * c, self.delta, self.z, self.covariate_names, validate=False)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.a, other.a)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.delta, other.delta)
            and np.array_equal(self.z, other.z)
        )

    def __repr__(self):
        return f"Dataset(n={self.n}, p={self.p}, events={int(self.delta.sum())}, tau={self.tau:g})"


def distinct_failure_times(d: Dataset) -> np.ndarray:
    return np.unique(d.y[d.delta == 1])


def load_csv(path, schema: Schema | None = None) -> Dataset:
    schema = schema or Schema()
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDataset(f"{path}: empty file") from None
        for col in (schema.a, schema.y, schema.delta):
            if col not in header:
                raise MissingColumn(col)
        zcols = list(schema.z) if schema.z else [h for h in header if h.startswith("z") and h[1:].isdigit()]
        if not zcols:
            raise MissingColumn("z1")
        for col in zcols:
            if col not in header:
                raise MissingColumn(col)
        idx = {h: k for k, h in enumerate(header)}
        a, y, delta, z = [], [], [], []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue

            def num(col):
                raw = row[idx[col]].strip() if idx[col] < len(row) else ""
                try:
                    return float(raw)
                except ValueError:
                    raise ParseError(row_no, col, raw) from None

            raw_delta = row[idx[schema.delta]].strip() if idx[schema.delta] < len(row) else ""
            if raw_delta not in ("0", "1"):
                raise ParseError(row_no, schema.delta, raw_delta)
            ai, yi, zi = num(schema.a), num(schema.y), [num(c) for c in zcols]
            di = int(raw_delta)
            _check_row(row_no, ai, yi, di, np.asarray(zi))
            a.append(ai)
            y.append(yi)
            delta.append(di)
            z.append(zi)
    if not y:
        raise EmptyDataset(f"{path}: no data rows")
    if sum(delta) == 0:
        raise NoEvents(f"{path}: no observed failures")
    if len(y) < 2:
        raise EmptyDataset(f"{path}: need at least 2 rows")
    return Dataset(a, y, delta, np.array(z), zcols, validate=False)


def write_csv(d: Dataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a", "y", "delta", *d.covariate_names])
        for i in range(d.n):
            w.writerow([repr(float(d.a[i])), repr(float(d.y[i])), int(d.delta[i]), *(repr(float(x)) for x in d.z[i])])
