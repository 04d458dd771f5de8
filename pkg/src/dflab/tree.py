"""Greedy binary regression trees and their degrees of freedom.

Splits minimize the summed child SSE over all (feature, cutpoint) pairs,
with cutpoints at midpoints between consecutive distinct sorted values.
No pruning; growth stops at the depth cap or when a node is degenerate
(fewer than two rows, zero response variance, or no valid split). The
fitted map is piecewise averaging, so the conditional smoother is block
diagonal with trace exactly equal to the number of leaves; everything the
tree spends beyond that is search cost.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import tree_split_scan
from .core import DataSet, FitOutput, InvalidInputError, SmootherMatrix, child_seed
from .empirical import NS_DATA, DfExperiment, Procedure, run_experiment

__all__ = ["fit_tree", "tree_smoother", "tree_df_table", "TreeProcedure"]


def _best_split(X, y, rows):
    """Best (feature, cut, sse) over all features for one node.

    Ties keep the lowest feature index, then the smallest cutpoint (the
    scan returns the first minimum in ascending cut order).
    """
    best = None
    for f in range(X.shape[1]):
        xv = X[rows, f]
        order = np.argsort(xv, kind="stable")
        cut, sse = tree_split_scan(
            np.ascontiguousarray(xv[order]),
            np.ascontiguousarray(y[rows][order]),
        )
        if np.isnan(cut):
            continue
        if best is None or sse < best[2]:
            best = (f, float(cut), float(sse))
    return best


def fit_tree(data: DataSet, depth: int) -> FitOutput:
    """Grow a depth-capped greedy tree and return its leaf-average fit."""
    if depth < 0:
        raise InvalidInputError("depth must be nonnegative")
    X, y = data.X, data.y
    n = data.n
    fitted = np.empty(n)
    leaves = []
    splits = []
    stack = [(np.arange(n), 0)]
    while stack:
        rows, d = stack.pop()
        yv = y[rows]
        if d >= depth or rows.size < 2 or np.ptp(yv) == 0.0:
            fitted[rows] = yv.mean()
            leaves.append(rows)
            continue
        best = _best_split(X, y, rows)
        if best is None:
            fitted[rows] = yv.mean()
            leaves.append(rows)
            continue
        f, cut, _ = best
        go_left = X[rows, f] <= cut
        splits.append({"feature": f, "cut": cut, "depth": d, "size": int(rows.size)})
        # push right first so leaves come out in left-to-right order
        stack.append((rows[~go_left], d + 1))
        stack.append((rows[go_left], d + 1))
    S = tree_smoother(leaves, n)
    return FitOutput(
        fitted=fitted,
        smoother=SmootherMatrix(S),
        meta={"leaves": leaves, "n_leaves": len(leaves), "splits": splits,
              "depth": depth},
    )


def tree_smoother(leaves, n: int) -> np.ndarray:
    """Block-diagonal averaging matrix of a leaf partition of n rows."""
    S = np.zeros((n, n))
    seen = 0
    for rows in leaves:
        S[np.ix_(rows, rows)] = 1.0 / rows.size
        seen += rows.size
    if seen != n:
        raise InvalidInputError("leaves do not partition the rows")
    return S


@dataclass(frozen=True)
class TreeProcedure(Procedure):
    depth: int = 2
    name: str = "tree"

    @property
    def params(self) -> dict:
        return {"depth": self.depth}

    def fit(self, data: DataSet) -> FitOutput:
        return fit_tree(data, self.depth)


def tree_df_table(depths=(0, 1, 2, 3, 4), p_values=(1, 5, 10), n: int = 100,
                  m: int = 100, reps: int = 10, seed: int = 0,
                  threads: int = 1) -> list[dict]:
    """Empirical df of greedy trees across depth and dimension.

    One row per (depth, p): the mean leaf count, the covariance df with
    its standard error, and the search surplus msdf = df - E[leaves].
    """
    rows = []
    for depth in depths:
        for p in p_values:
            cell_seed = int(child_seed(seed, NS_DATA, depth, p).generate_state(1)[0])
            exp = DfExperiment(procedure=TreeProcedure(depth), n=n, p=p,
                               m=m, reps=reps, seed=cell_seed)
            res = run_experiment(
                exp,
                collectors={"M": lambda out: out.meta["n_leaves"]},
                threads=threads,
            )
            msdf = res.df_reps - res.collected_reps["M"]
            msdf_se = (float(np.std(msdf, ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0)
            rows.append({
                "depth": depth,
                "M": res.collected["M"].value,
                "p": p,
                "df_hat": res.df.value,
                "se": res.df.std_error,
                "msdf": float(np.mean(msdf)),
                "msdf_se": msdf_se,
            })
    return rows
