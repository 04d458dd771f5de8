"""Shared data structures, randomness, and error taxonomy.

Everything downstream speaks in terms of :class:`DataSet` (a fixed design
matrix plus one response vector), :class:`FitOutput` (fitted values, an
optional smoother matrix, and free-form metadata) and :class:`DfEstimate`
(a Monte Carlo estimate with its standard error).
"""
from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DflabError",
    "InvalidInputError",
    "InsufficientDataError",
    "SingularDesignError",
    "ConvergenceError",
    "DegenerateCriterionError",
    "DataSet",
    "SmootherMatrix",
    "FitOutput",
    "DfEstimate",
    "child_rng",
    "child_seed",
    "simulate_gaussian_response",
    "sample_covariance",
    "read_dataset_csv",
]


class DflabError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(DflabError):
    """Arguments are malformed: bad shapes, non-finite values, bad flags."""


class InsufficientDataError(InvalidInputError):
    """Not enough observations (or repetitions) for the requested operation."""


class SingularDesignError(DflabError):
    """A design or normal-equations matrix is numerically singular."""


class ConvergenceError(DflabError):
    """An iterative solver exhausted its iteration budget."""


class DegenerateCriterionError(DflabError):
    """A model-selection criterion is undefined for the given inputs."""


def _as_float_array(a, name, ndim):
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != ndim:
        raise InvalidInputError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class DataSet:
    """A fixed design matrix ``X`` (n x p) and response vector ``y`` (n).

    Arrays are copied and marked read-only so a dataset cannot drift
    between fits that are supposed to see identical inputs.
    """

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = _as_float_array(self.X, "X", 2).copy()
        y = _as_float_array(self.y, "y", 1).copy()
        if X.shape[0] != y.shape[0]:
            raise InvalidInputError(
                f"X has {X.shape[0]} rows but y has {y.shape[0]} entries"
            )
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise InsufficientDataError("X must have at least one row and one column")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def with_y(self, y) -> "DataSet":
        """Same design, different response."""
        return DataSet(self.X, y)


@dataclass(frozen=True)
class SmootherMatrix:
    """A concrete n x n linear map from responses to fitted values."""

    matrix: np.ndarray

    def __post_init__(self):
        S = _as_float_array(self.matrix, "smoother matrix", 2)
        if S.shape[0] != S.shape[1]:
            raise InvalidInputError(f"smoother matrix must be square, got {S.shape}")
        S = S.copy()
        S.setflags(write=False)
        object.__setattr__(self, "matrix", S)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    def apply(self, y) -> np.ndarray:
        return self.matrix @ np.asarray(y, dtype=np.float64)


@dataclass
class FitOutput:
    """Result of applying a fitting procedure to one dataset."""

    fitted: np.ndarray
    smoother: SmootherMatrix | None = None
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DfEstimate:
    """A Monte Carlo degrees-of-freedom estimate.

    ``std_error`` is the standard deviation of the per-replication values
    divided by sqrt(n_reps); it is zero when n_reps == 1.
    """

    value: float
    std_error: float
    n_reps: int
    seed: int

    def __post_init__(self):
        if self.n_reps < 1:
            raise InvalidInputError("n_reps must be >= 1")
        if not math.isfinite(self.value) or not math.isfinite(self.std_error):
            raise InvalidInputError("df estimate must be finite")
        if self.std_error < 0:
            raise InvalidInputError("std_error must be nonnegative")

    def to_record(self) -> dict:
        return dataclasses.asdict(self)


def child_seed(master: int, *path: int) -> np.random.SeedSequence:
    """Deterministic child seed for a namespaced position under ``master``.

    The same (master, path) always yields the same stream regardless of
    the order in which children are drawn, which is what makes threaded
    and sequential experiment runs bit-identical.
    """
    return np.random.SeedSequence(entropy=[int(master), *map(int, path)])


def child_rng(master: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(child_seed(master, *path))


def simulate_gaussian_response(mu, seed: int) -> np.ndarray:
    """Draw y ~ N(mu, I) with unit noise variance.

    Parameters
    ----------
    mu : array_like
        Mean vector.
    seed : int
        Seed for the generator; identical seeds give identical draws.
    """
    mu = _as_float_array(mu, "mu", 1)
    rng = np.random.default_rng(int(seed))
    return mu + rng.standard_normal(mu.shape[0])


def sample_covariance(a, b) -> float:
    """Sample covariance of two equal-length sequences (m - 1 denominator)."""
    a = _as_float_array(a, "a", 1)
    b = _as_float_array(b, "b", 1)
    if a.shape[0] != b.shape[0]:
        raise InvalidInputError(
            f"length mismatch: {a.shape[0]} vs {b.shape[0]}"
        )
    m = a.shape[0]
    if m < 2:
        raise InsufficientDataError("sample covariance needs at least 2 repetitions")
    return float(np.dot(a - a.mean(), b - b.mean()) / (m - 1))


def read_dataset_csv(path) -> DataSet:
    """Load a dataset from CSV with columns x1..xp and y (any order).

    Rows containing non-numeric cells are rejected; the error names the
    offending row (1-based, counting the header as row 1).
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidInputError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if "y" not in header:
            raise InvalidInputError(f"{path}: missing 'y' column")
        x_names = [h for h in header if h != "y"]
        expected = [f"x{i}" for i in range(1, len(x_names) + 1)]
        if sorted(x_names) != sorted(expected):
            raise InvalidInputError(
                f"{path}: predictor columns must be x1..x{len(x_names)}, got {x_names}"
            )
        col_of = {name: i for i, name in enumerate(header)}
        rows = []
        for lineno, cells in enumerate(reader, start=2):
            if not cells or all(c.strip() == "" for c in cells):
                continue
            if len(cells) != len(header):
                raise InvalidInputError(
                    f"{path}: row {lineno} has {len(cells)} cells, expected {len(header)}"
                )
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                raise InvalidInputError(
                    f"{path}: row {lineno} contains a non-numeric cell"
                ) from None
    if not rows:
        raise InsufficientDataError(f"{path}: no data rows")
    raw = np.asarray(rows, dtype=np.float64)
    X = np.column_stack([raw[:, col_of[f"x{i}"]] for i in range(1, len(x_names) + 1)])
    y = raw[:, col_of["y"]]
    return DataSet(X, y)
