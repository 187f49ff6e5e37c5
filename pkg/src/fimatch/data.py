"""Data model and CSV ingestion for two-sample matching problems.

Samples are stored column-wise as numpy arrays; ``Unit`` offers a row view
when record-level access is convenient.  Unit order is file order and is
preserved, which matters for reproducibility of donor draws.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import CsvFormatError

WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class RoleMap:
    """Names of the covariate and response columns.

    ``x1`` are common covariates (may be empty), ``x2`` the instrument
    columns, ``y1``/``y2`` the two responses observed in samples A and B.
    """

    x1: tuple[str, ...]
    x2: tuple[str, ...]
    y1: str
    y2: str

    def __post_init__(self):
        object.__setattr__(self, "x1", tuple(self.x1))
        object.__setattr__(self, "x2", tuple(self.x2))
        if not self.x2:
            raise ValueError("role map needs at least one instrument column in x2")


@dataclass(frozen=True)
class Unit:
    """One survey record."""

    id: str
    weight: float
    x1: np.ndarray
    x2: np.ndarray
    y1: float | None = None
    y2: float | None = None


@dataclass(frozen=True)
class Sample:
    """A role-tagged collection of units, stored column-wise."""

    ids: tuple[str, ...]
    weights: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        n = len(self.ids)
        for name in ("weights", "x1", "x2", "y"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if arr.shape[0] != n:
                raise ValueError(f"{name} has {arr.shape[0]} rows, expected {n}")
        if self.x1.ndim != 2 or self.x2.ndim != 2:
            raise ValueError("x1 and x2 must be 2-D arrays")
        if np.any(self.weights <= 0):
            raise ValueError("unit weights must be strictly positive")

    @property
    def n(self) -> int:
        return len(self.ids)

    def unit(self, i: int, role: str) -> Unit:
        y1 = float(self.y[i]) if role == "a" else None
        y2 = float(self.y[i]) if role == "b" else None
        return Unit(
            id=self.ids[i],
            weight=float(self.weights[i]),
            x1=self.x1[i],
            x2=self.x2[i],
            y1=y1,
            y2=y2,
        )


@dataclass(frozen=True)
class MatchingProblem:
    """Paired samples: A observes (x, y1), B observes (x, y2)."""

    sample_a: Sample
    sample_b: Sample
    roles: RoleMap

    def __post_init__(self):
        if self.sample_a.n == 0 or self.sample_b.n == 0:
            raise ValueError("both samples must be non-empty")
        if self.sample_a.x1.shape[1] != self.sample_b.x1.shape[1]:
            raise ValueError("samples disagree on the number of x1 columns")
        if self.sample_a.x2.shape[1] != self.sample_b.x2.shape[1]:
            raise ValueError("samples disagree on the number of x2 columns")
        for name, sample in (("A", self.sample_a), ("B", self.sample_b)):
            if not np.all(np.isfinite(sample.y)):
                raise ValueError(f"sample {name} has missing response values")

    @property
    def n_a(self) -> int:
        return self.sample_a.n

    @property
    def n_b(self) -> int:
        return self.sample_b.n


@dataclass(frozen=True)
class FractionalDataset:
    """Per-recipient donor values with normalized fractional weights.

    ``donors[i, j]`` is the j-th imputed y1 value for recipient i of sample
    B and ``weights[i, j]`` its fractional weight; rows sum to one.
    ``initial_weights`` keeps the fixed importance weights the EM started
    from (uniform for parametric draws).
    """

    donors: np.ndarray
    weights: np.ndarray
    initial_weights: np.ndarray = field(default=None)

    def __post_init__(self):
        donors = np.atleast_2d(np.asarray(self.donors, dtype=float))
        weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "donors", donors)
        object.__setattr__(self, "weights", weights)
        if self.initial_weights is None:
            object.__setattr__(self, "initial_weights", np.full_like(donors, 1.0 / donors.shape[1]))
        else:
            object.__setattr__(
                self, "initial_weights", np.atleast_2d(np.asarray(self.initial_weights, dtype=float))
            )
        if donors.shape != weights.shape or donors.shape != self.initial_weights.shape:
            raise ValueError("donors, weights and initial_weights must share a shape")
        self.validate()

    @property
    def n_recipients(self) -> int:
        return self.donors.shape[0]

    @property
    def m(self) -> int:
        return self.donors.shape[1]

    def validate(self):
        if np.any(self.weights < 0):
            raise ValueError("fractional weights must be nonnegative")
        sums = self.weights.sum(axis=1)
        bad = np.nonzero(np.abs(sums - 1.0) > WEIGHT_SUM_TOL)[0]
        if bad.size:
            raise ValueError(
                f"fractional weights of recipient {bad[0]} sum to {sums[bad[0]]!r}, not 1"
            )


def _parse_cell(text: str, row: int, column: str, path: str) -> float:
    text = text.strip() if text is not None else ""
    if text == "":
        raise CsvFormatError(
            f"{path}: blank value in column '{column}' at data row {row}",
            row=row,
            column=column,
        )
    try:
        return float(text)
    except ValueError as exc:
        raise CsvFormatError(
            f"{path}: non-numeric value {text!r} in column '{column}' at data row {row}",
            row=row,
            column=column,
        ) from exc


def _load_sample(path, x1_cols, x2_cols, y_col) -> Sample:
    path = str(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = ["id", *x1_cols, *x2_cols, y_col]
        missing = [c for c in needed if c not in header]
        if missing:
            raise CsvFormatError(
                f"{path}: missing required column(s) {', '.join(missing)}",
                column=missing[0],
            )
        has_weight = "weight" in header
        ids, weights, x1, x2, y = [], [], [], [], []
        for row_number, row in enumerate(reader, start=1):
            ids.append(row["id"])
            weights.append(
                _parse_cell(row["weight"], row_number, "weight", path) if has_weight else 1.0
            )
            x1.append([_parse_cell(row[c], row_number, c, path) for c in x1_cols])
            x2.append([_parse_cell(row[c], row_number, c, path) for c in x2_cols])
            y.append(_parse_cell(row[y_col], row_number, y_col, path))
    if not ids:
        raise CsvFormatError(f"{path}: sample is empty")
    n = len(ids)
    return Sample(
        ids=tuple(ids),
        weights=np.asarray(weights, dtype=float),
        x1=np.asarray(x1, dtype=float).reshape(n, len(x1_cols)),
        x2=np.asarray(x2, dtype=float).reshape(n, len(x2_cols)),
        y=np.asarray(y, dtype=float),
    )


def load_samples(path_a, path_b, roles: RoleMap) -> MatchingProblem:
    """Read the two sample CSVs and return a validated problem.

    Files are UTF-8 with a header row; a missing ``weight`` column defaults
    every weight to 1.  Format violations raise :class:`CsvFormatError`
    with the offending row and column.
    """
    sample_a = _load_sample(path_a, roles.x1, roles.x2, roles.y1)
    sample_b = _load_sample(path_b, roles.x1, roles.x2, roles.y2)
    return MatchingProblem(sample_a=sample_a, sample_b=sample_b, roles=roles)


def write_fractional(dataset: FractionalDataset, problem: MatchingProblem, path) -> None:
    """Write the fused dataset as CSV, one row per (recipient, donor).

    Numeric values are printed with 17 significant digits so re-reading
    reproduces them exactly.
    """
    dataset.validate()
    b = problem.sample_b
    if dataset.n_recipients != b.n:
        raise ValueError(
            f"dataset has {dataset.n_recipients} recipients but sample B has {b.n} units"
        )
    header = ["recipient_id", "donor_index", "fractional_weight", "y1_imputed", "y2"]
    header += list(problem.roles.x1) + list(problem.roles.x2)
    fmt = lambda v: format(float(v), ".17g")
    with open(str(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(b.n):
            covs = [fmt(v) for v in b.x1[i]] + [fmt(v) for v in b.x2[i]]
            for j in range(dataset.m):
                writer.writerow(
                    [b.ids[i], j + 1, fmt(dataset.weights[i, j]), fmt(dataset.donors[i, j]), fmt(b.y[i])]
                    + covs
                )


def read_fractional(path):
    """Read a fused CSV back into (recipient_ids, donor_index, weights, y1, y2) arrays."""
    with open(str(path), newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    ids = [r["recipient_id"] for r in rows]
    j = np.array([int(r["donor_index"]) for r in rows])
    w = np.array([float(r["fractional_weight"]) for r in rows])
    y1 = np.array([float(r["y1_imputed"]) for r in rows])
    y2 = np.array([float(r["y2"]) for r in rows])
    return ids, j, w, y1, y2


def make_problem(
    x2_a,
    y1_a,
    x2_b,
    y2_b,
    x1_a=None,
    x1_b=None,
    weights_a=None,
    weights_b=None,
    ids_a=None,
    ids_b=None,
    roles: RoleMap | None = None,
) -> MatchingProblem:
    """Assemble a MatchingProblem from in-memory arrays (test and simulation helper)."""
    y1_a = np.asarray(y1_a, dtype=float).ravel()
    y2_b = np.asarray(y2_b, dtype=float).ravel()
    n_a, n_b = y1_a.size, y2_b.size

    def cols(arr, n):
        if arr is None:
            return np.empty((n, 0))
        arr = np.asarray(arr, dtype=float)
        return arr.reshape(n, -1)

    x1a, x1b = cols(x1_a, n_a), cols(x1_b, n_b)
    x2a, x2b = cols(x2_a, n_a), cols(x2_b, n_b)
    if roles is None:
        roles = RoleMap(
            x1=tuple(f"x1_{k + 1}" for k in range(x1a.shape[1])),
            x2=tuple(f"x2_{k + 1}" for k in range(x2a.shape[1])),
            y1="y1",
            y2="y2",
        )
    wa = np.ones(n_a) if weights_a is None else np.asarray(weights_a, dtype=float)
    wb = np.ones(n_b) if weights_b is None else np.asarray(weights_b, dtype=float)
    ids_a = tuple(ids_a) if ids_a is not None else tuple(f"a{i + 1:06d}" for i in range(n_a))
    ids_b = tuple(ids_b) if ids_b is not None else tuple(f"b{i + 1:06d}" for i in range(n_b))
    return MatchingProblem(
        sample_a=Sample(ids=ids_a, weights=wa, x1=x1a, x2=x2a, y=y1_a),
        sample_b=Sample(ids=ids_b, weights=wb, x1=x1b, x2=x2b, y=y2_b),
        roles=roles,
    )
