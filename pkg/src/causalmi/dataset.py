"""Trace tables: loading, bootstrap resampling, cross-validation splits."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Dataset",
    "DatasetError",
    "SplitPlan",
    "Standardization",
    "child_rng",
    "load_traces",
    "read_traces",
    "write_traces",
    "bootstrap_resample",
    "cv_splits",
    "standardize",
]


class DatasetError(ValueError):
    """Malformed trace data."""


def child_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for task ``index`` under master ``seed``.

    Spawned children depend only on ``(seed, index)`` so parallel and serial
    evaluation draw identical streams.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


@dataclass(frozen=True)
class Dataset:
    """Named-column table of finite reals, one row per observation."""

    columns: tuple[str, ...]
    rows: np.ndarray

    def __post_init__(self):
        cols = tuple(str(c) for c in self.columns)
        rows = np.array(self.rows, dtype=float, copy=True)
        if rows.ndim == 1 and rows.size == 0:
            rows = rows.reshape(0, len(cols))
        if rows.ndim != 2 or rows.shape[1] != len(cols):
            raise DatasetError(
                f"rows must be a matrix with {len(cols)} columns, got shape {rows.shape}"
            )
        for name in cols:
            if not name:
                raise DatasetError("empty column name")
        seen = set()
        for name in cols:
            if name in seen:
                raise DatasetError(f"duplicate column {name!r}")
            seen.add(name)
        if not np.all(np.isfinite(rows)):
            r, c = np.argwhere(~np.isfinite(rows))[0]
            raise DatasetError(f"non-finite value at row {r}, column {cols[c]!r}")
        rows.setflags(write=False)
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "rows", rows)

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def n_cols(self) -> int:
        return self.rows.shape[1]

    def index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise KeyError(f"unknown column {name!r}") from None

    def __contains__(self, name: object) -> bool:
        return name in self.columns

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.index(name)]

    def select(self, names: Sequence[str]) -> "Dataset":
        idx = [self.index(n) for n in names]
        return Dataset(tuple(names), self.rows[:, idx])

    def drop(self, names: Iterable[str]) -> "Dataset":
        names = set(names)
        return self.select([c for c in self.columns if c not in names])

    def take(self, row_indices) -> "Dataset":
        return Dataset(self.columns, self.rows[np.asarray(row_indices, dtype=int)])

    def with_column(self, name: str, values) -> "Dataset":
        """Append ``name`` or, if present, replace it in place."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_rows,):
            raise DatasetError(f"column {name!r} has {values.size} values, expected {self.n_rows}")
        if name in self.columns:
            rows = self.rows.copy()
            rows[:, self.index(name)] = values
            return Dataset(self.columns, rows)
        return Dataset(self.columns + (name,), np.column_stack([self.rows, values]))

    def to_dict(self) -> dict[str, np.ndarray]:
        return {c: self.rows[:, i] for i, c in enumerate(self.columns)}


@dataclass(frozen=True)
class SplitPlan:
    runs: int = 20
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def _parse(lines: Iterable[str], source: str) -> Dataset:
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetError(f"{source}: empty file, expected a header") from None
    header = [h.strip() for h in header]
    for j, name in enumerate(header):
        if not name:
            raise DatasetError(f"{source}: empty column name at position {j}")
    dupes = sorted({h for h in header if header.count(h) > 1})
    if dupes:
        raise DatasetError(f"{source}: duplicate column {dupes[0]!r}")

    rows = []
    for lineno, record in enumerate(reader, start=2):
        if not record or all(not cell.strip() for cell in record):
            continue
        if len(record) != len(header):
            raise DatasetError(
                f"{source}: line {lineno}: ragged row with {len(record)} fields, "
                f"expected {len(header)}"
            )
        values = []
        for name, cell in zip(header, record):
            cell = cell.strip()
            if not cell:
                raise DatasetError(f"{source}: line {lineno}, column {name!r}: missing value")
            try:
                v = float(cell)
            except ValueError:
                raise DatasetError(
                    f"{source}: line {lineno}, column {name!r}: non-numeric cell {cell!r}"
                ) from None
            if not math.isfinite(v):
                raise DatasetError(f"{source}: line {lineno}, column {name!r}: non-finite {cell!r}")
            values.append(v)
        rows.append(values)
    return Dataset(tuple(header), np.array(rows, dtype=float).reshape(len(rows), len(header)))


def load_traces(path) -> Dataset:
    """Read a header-first, comma-separated trace file."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        return _parse(fh, str(path))


def read_traces(text: str) -> Dataset:
    return _parse(io.StringIO(text), "<string>")


def format_float(x: float) -> str:
    # repr round-trips exactly and is platform independent
    return repr(float(x))


def write_traces(d: Dataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(d.columns) + "\n")
        for row in d.rows:
            fh.write(",".join(format_float(v) for v in row) + "\n")


def bootstrap_resample(d: Dataset, seed: int) -> Dataset:
    """Draw ``n_rows`` rows with replacement."""
    if d.n_rows < 1:
        raise DatasetError("cannot resample an empty dataset")
    rng = np.random.default_rng(int(seed))
    return d.take(rng.integers(0, d.n_rows, size=d.n_rows))


def cv_splits(d: Dataset, plan: SplitPlan) -> list[tuple[Dataset, Dataset]]:
    """Random train/test partitions, one per run.

    Run ``r`` depends only on ``(plan.seed, r)``.
    """
    if d.n_rows < 5:
        raise DatasetError(f"need at least 5 rows for cross-validation, got {d.n_rows}")
    n_train = int(round(plan.train_fraction * d.n_rows))
    n_train = min(max(n_train, 1), d.n_rows - 1)
    out = []
    for run in range(plan.runs):
        perm = child_rng(plan.seed, run).permutation(d.n_rows)
        out.append((d.take(np.sort(perm[:n_train])), d.take(np.sort(perm[n_train:]))))
    return out


@dataclass(frozen=True)
class Standardization:
    columns: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    constant: tuple[str, ...] = field(default=())

    def invert(self, d: Dataset) -> Dataset:
        out = d
        for name, mu, sd in zip(self.columns, self.mean, self.std):
            if name in self.constant or name not in d:
                continue
            out = out.with_column(name, d.column(name) * sd + mu)
        return out


def standardize(d: Dataset) -> tuple[Dataset, Standardization]:
    """Center and scale every column (sample sd, ``n - 1`` denominator).

    Constant columns pass through untouched and are listed in
    ``Standardization.constant``.
    """
    if d.n_rows < 2:
        raise DatasetError("standardization needs at least 2 rows")
    mean = d.rows.mean(axis=0)
    std = d.rows.std(axis=0, ddof=1)
    constant = tuple(c for c, s in zip(d.columns, std) if s == 0.0)
    rows = d.rows.copy()
    for j, s in enumerate(std):
        if s > 0.0:
            rows[:, j] = (rows[:, j] - mean[j]) / s
    return Dataset(d.columns, rows), Standardization(d.columns, mean, std, constant)
