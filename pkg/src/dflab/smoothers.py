"""Fixed linear smoothers: least squares, ridge, and k-nearest-neighbors.

These are the procedures whose smoother matrix does not depend on y, so
their degrees of freedom is exactly the matrix trace and their search df
is zero. They serve as calibration targets for the Monte Carlo estimator.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    DataSet,
    FitOutput,
    InvalidInputError,
    SingularDesignError,
    SmootherMatrix,
)
from .empirical import Procedure

__all__ = [
    "fit_ols",
    "fit_ridge",
    "fit_knn",
    "analytic_ridge_df",
    "OlsProcedure",
    "RidgeProcedure",
    "KnnProcedure",
    "ConstantProcedure",
]

_RANK_TOL = 1e-10


def fit_ols(data: DataSet) -> FitOutput:
    """Least squares via SVD; S = X (X'X)^-1 X' is the column-space projector."""
    U, s, _ = np.linalg.svd(data.X, full_matrices=False)
    if s[0] <= 0 or s[-1] <= _RANK_TOL * s[0]:
        raise SingularDesignError(
            f"design is numerically rank-deficient (spectrum {s[-1]:.3e}..{s[0]:.3e})"
        )
    S = U @ U.T
    return FitOutput(fitted=S @ data.y, smoother=SmootherMatrix(S),
                     meta={"rank": data.p})


def fit_ridge(data: DataSet, lam: float) -> FitOutput:
    """Ridge smoother S = X (X'X + lam I)^-1 X'.

    lam = 0 falls back to least squares (and insists on full column rank).
    """
    if lam < 0:
        raise InvalidInputError("ridge penalty must be nonnegative")
    if lam == 0.0:
        return fit_ols(data)
    U, s, _ = np.linalg.svd(data.X, full_matrices=False)
    shrink = s * s / (s * s + lam)
    S = (U * shrink) @ U.T
    return FitOutput(fitted=S @ data.y, smoother=SmootherMatrix(S),
                     meta={"df": float(shrink.sum()), "lambda": float(lam)})


def analytic_ridge_df(singular_values, lam: float) -> float:
    """Closed-form ridge df: sum of d_j^2 / (d_j^2 + lam).

    At lam = 0 zero singular values contribute nothing (0/0 read as 0).
    """
    d = np.asarray(singular_values, dtype=np.float64)
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise InvalidInputError("singular values must be finite and nonnegative")
    if lam < 0:
        raise InvalidInputError("ridge penalty must be nonnegative")
    d2 = d * d
    if lam == 0.0:
        return float(np.count_nonzero(d2 > 0))
    return float((d2 / (d2 + lam)).sum())


def fit_knn(data: DataSet, k: int) -> FitOutput:
    """k-nearest-neighbor averaging in Euclidean distance.

    Every point is its own first neighbor; the remaining k-1 slots go to
    the closest other rows, distance ties broken by lower row index. Each
    row of S holds 1/k at the neighbor set, so trace(S) = n/k exactly.
    """
    n = data.n
    if not 1 <= k <= n:
        raise InvalidInputError(f"k must be in [1, {n}], got {k}")
    X = data.X
    sq = (X * X).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    S = np.zeros((n, n))
    idx = np.arange(n)
    for i in range(n):
        row = d2[i].copy()
        row[i] = -np.inf  # self always wins the first slot
        order = np.lexsort((idx, row))
        S[i, order[:k]] = 1.0 / k
    return FitOutput(fitted=S @ data.y, smoother=SmootherMatrix(S),
                     meta={"k": k})


@dataclass(frozen=True)
class OlsProcedure(Procedure):
    name: str = "ols"
    linear_smoother: bool = True

    def fit(self, data: DataSet) -> FitOutput:
        return fit_ols(data)


@dataclass(frozen=True)
class RidgeProcedure(Procedure):
    lam: float = 1.0
    name: str = "ridge"
    linear_smoother: bool = True

    @property
    def params(self) -> dict:
        return {"lambda": self.lam}

    def fit(self, data: DataSet) -> FitOutput:
        return fit_ridge(data, self.lam)


@dataclass(frozen=True)
class KnnProcedure(Procedure):
    k: int = 5
    name: str = "knn"
    linear_smoother: bool = True

    @property
    def params(self) -> dict:
        return {"k": self.k}

    def fit(self, data: DataSet) -> FitOutput:
        return fit_knn(data, self.k)


@dataclass(frozen=True)
class ConstantProcedure(Procedure):
    """Global mean; its smoother is the rank-one averaging matrix (df = 1)."""

    name: str = "constant"
    linear_smoother: bool = True

    def fit(self, data: DataSet) -> FitOutput:
        n = data.n
        S = np.full((n, n), 1.0 / n)
        return FitOutput(fitted=S @ data.y, smoother=SmootherMatrix(S))
