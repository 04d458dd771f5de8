"""Model-selection criteria parameterized by a degrees-of-freedom value.

All criteria take the residual sum of squares and a df number directly, so
the same formulas can be fed nominal, trace-based, or Monte Carlo df.
Natural logarithms throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .core import DegenerateCriterionError, InvalidInputError

__all__ = ["CriterionValue", "aic", "bic", "gcv", "r_squared_decrease"]


@dataclass(frozen=True)
class CriterionValue:
    name: str
    value: float
    df_used: float
    n: int


def _check(rss: float, df: float, n: int):
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    if df < 0:
        raise InvalidInputError("df must be nonnegative")
    if not math.isfinite(rss) or rss < 0:
        raise InvalidInputError("rss must be finite and nonnegative")


def aic(rss: float, df: float, n: int) -> CriterionValue:
    """n*log(rss) + 2*df."""
    _check(rss, df, n)
    if rss == 0.0:
        raise DegenerateCriterionError("aic undefined at rss = 0")
    return CriterionValue("aic", n * math.log(rss) + 2.0 * df, df, n)


def bic(rss: float, df: float, n: int) -> CriterionValue:
    """n*log(rss) + df*log(n)."""
    _check(rss, df, n)
    if rss == 0.0:
        raise DegenerateCriterionError("bic undefined at rss = 0")
    return CriterionValue("bic", n * math.log(rss) + df * math.log(n), df, n)


def gcv(rss: float, df: float, n: int) -> CriterionValue:
    """rss / (1 - df/n)^2, undefined once df reaches n."""
    _check(rss, df, n)
    if df >= n:
        raise DegenerateCriterionError(f"gcv undefined for df = {df} >= n = {n}")
    denom = (1.0 - df / n) ** 2
    return CriterionValue("gcv", rss / denom, df, n)


def r_squared_decrease(mse0: float, mse: float) -> float:
    """Relative error decrease (mse0 - mse) / mse0 of a model over the
    constant baseline. Negative values mean the model did worse."""
    if not math.isfinite(mse0) or not math.isfinite(mse):
        raise InvalidInputError("mse values must be finite")
    if mse0 <= 0:
        raise InvalidInputError("baseline mse must be positive")
    if mse < 0:
        raise InvalidInputError("mse must be nonnegative")
    return (mse0 - mse) / mse0
