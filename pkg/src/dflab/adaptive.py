"""Adaptive linear procedures: best-subset selection and the lasso.

Both procedures pick structure from the data before (or while) shrinking,
so their degrees of freedom splits into a smoothing part (the trace of the
converged smoother) and a search part. For the lasso solved by iterating
ridge reweights, the converged smoother S = X (X'X + lam Psi)^-1 X' is
explicit, and the derivative of S along y gives a closed-form search term
delta = sum_ij (dS_ij/dy_i) y_j.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import (
    ConvergenceError,
    DataSet,
    DfEstimate,
    FitOutput,
    InvalidInputError,
    SmootherMatrix,
    child_rng,
)
from .criteria import gcv
from .empirical import NS_DATA, DfExperiment, Procedure, run_experiment

__all__ = [
    "fit_best_subset",
    "sdf_best_subset",
    "fit_lasso_mm",
    "fit_relaxed_lasso",
    "lasso_df_theorem",
    "gcv_path_lasso",
    "simulate_sparse_gaussian",
    "DfBreakdown",
    "BestSubsetProcedure",
    "LassoMmProcedure",
    "RelaxedLassoProcedure",
    "LASSO_FLOOR",
]

LASSO_FLOOR = 1e-7
_SUBSET_GUARD = 20


def fit_best_subset(data: DataSet, lam0: float, allow_large: bool = False) -> FitOutput:
    """Exhaustive best-subset selection under penalized RSS.

    Minimizes ||y - X_A b||^2 + lam0 * |A| over all 2^p subsets A. Ties
    prefer the smaller subset, then lexicographic order. Enumeration is
    exponential; p > 20 requires ``allow_large=True``.
    """
    if lam0 < 0:
        raise InvalidInputError("subset penalty must be nonnegative")
    X, y = data.X, data.y
    n, p = data.n, data.p
    if p > _SUBSET_GUARD and not allow_large:
        raise InvalidInputError(
            f"p = {p} subsets would enumerate 2^{p} models; "
            "pass allow_large=True to override"
        )
    yy = float(y @ y)
    best_score = yy  # empty subset
    best = ((), np.zeros(0), yy)
    for size in range(1, p + 1):
        for subset in itertools.combinations(range(p), size):
            XA = X[:, subset]
            coef, res, rank, _ = np.linalg.lstsq(XA, y, rcond=None)
            if rank < size or res.size == 0:
                rss = float(((y - XA @ coef) ** 2).sum())
            else:
                rss = float(res[0])
            score = rss + lam0 * size
            if score < best_score:
                best_score = score
                best = (subset, coef, rss)
    subset, coef, rss = best
    beta = np.zeros(p)
    beta[list(subset)] = coef
    fitted = X @ beta
    S = None
    if subset:
        XA = X[:, list(subset)]
        U, s, _ = np.linalg.svd(XA, full_matrices=False)
        keep = s > 1e-10 * s[0]
        S = U[:, keep] @ U[:, keep].T
        rank = int(keep.sum())
    else:
        S = np.zeros((n, n))
        rank = 0
    return FitOutput(
        fitted=fitted,
        smoother=SmootherMatrix(S),
        meta={"active": tuple(subset), "beta": beta, "rss": rss,
              "score": best_score, "rank": rank, "lam0": float(lam0)},
    )


@dataclass(frozen=True)
class BestSubsetProcedure(Procedure):
    lam0: float = 2.0
    allow_large: bool = False
    name: str = "best-subset"

    @property
    def params(self) -> dict:
        return {"lambda0": self.lam0}

    def fit(self, data: DataSet) -> FitOutput:
        return fit_best_subset(data, self.lam0, self.allow_large)


def sdf_best_subset(exp: DfExperiment, threads: int = 1) -> DfEstimate:
    """Search df of best-subset selection: df minus E[rank of X_A].

    For a select-then-least-squares procedure the conditional smoother is
    the projector onto the selected columns, so this equals the smoother
    surplus measured by ``empirical_msdf`` with the rank extractor.
    """
    if not isinstance(exp.procedure, BestSubsetProcedure):
        raise InvalidInputError("experiment procedure must be best-subset")
    res = run_experiment(exp, collectors={"rank": lambda o: o.meta["rank"]},
                         threads=threads)
    diff = res.df_reps - res.collected_reps["rank"]
    reps = diff.shape[0]
    se = float(np.std(diff, ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0
    return DfEstimate(value=float(np.mean(diff)), std_error=se,
                      n_reps=reps, seed=exp.seed)


def fit_lasso_mm(data: DataSet, lam: float, tol: float = 1e-8,
                 max_iter: int = 10_000, floor: float = LASSO_FLOOR) -> FitOutput:
    """Lasso via iterated ridge: beta <- (X'X + lam Psi)^-1 X'y.

    Psi = diag{1 / (2 max(|beta_j|, floor))}; the first iterate is plain
    ridge with Psi = I. Minimizes ||y - X beta||^2 + lam ||beta||_1 (no
    halves, no 1/n). Reported coefficients have sub-floor entries pinned
    at sign * floor and are treated as zero for active-set purposes.

    The output smoother X (X'X + lam Psi)^-1 X' uses the converged Psi; at
    the fixed point its active block reproduces the lasso KKT conditions.
    Hitting max_iter is not an error; the outcome lands in
    meta["converged"] and downstream consumers that need a fixed point
    (the df decomposition) refuse unconverged fits themselves.
    """
    if lam <= 0:
        raise InvalidInputError("lasso penalty must be positive")
    X, y = data.X, data.y
    n, p = data.n, data.p
    G = X.T @ X
    c = X.T @ y

    beta = np.linalg.solve(G + lam * np.eye(p), c)
    objective = [_lasso_objective(X, y, beta, lam)]
    converged = False
    for _ in range(max_iter):
        psi = 0.5 / np.maximum(np.abs(beta), floor)
        A = G + lam * np.diag(psi)
        beta_new = scipy.linalg.solve(A, c, assume_a="pos", check_finite=False)
        delta = float(np.abs(beta_new - beta).max())
        beta = beta_new
        objective.append(_lasso_objective(X, y, beta, lam))
        if delta < tol:
            converged = True
            break

    floored = np.abs(beta) <= floor
    signs = np.where(np.sign(beta) == 0, 1.0, np.sign(beta))
    beta_out = np.where(floored, signs * floor, beta)
    psi = 0.5 / np.maximum(np.abs(beta_out), floor)
    A = G + lam * np.diag(psi)
    Ainv_Xt = scipy.linalg.solve(A, X.T, assume_a="pos", check_finite=False)
    S = X @ Ainv_Xt
    return FitOutput(
        fitted=X @ beta_out,
        smoother=SmootherMatrix(0.5 * (S + S.T)),
        meta={"beta": beta_out, "raw_beta": beta, "floored": floored,
              "active": ~floored, "psi": psi, "lambda": float(lam),
              "objective": np.asarray(objective), "n_iter": len(objective) - 1,
              "n_active": int((np.abs(beta_out) > 10 * floor).sum()),
              "floor": floor, "tol": tol, "converged": converged},
    )


def _lasso_objective(X, y, beta, lam):
    r = y - X @ beta
    return float(r @ r + lam * np.abs(beta).sum())


def simulate_sparse_gaussian(n: int, p: int, n_true: int = 3, seed: int = 0):
    """Sparse linear benchmark data: Gaussian design, leading unit effects.

    The first ``n_true`` coefficients are 1 and the rest 0, so with unit
    noise the signal-to-noise ratio Var(x'beta)/Var(eps) equals n_true.
    Returns (data, mu, beta).
    """
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    if n_true < 0 or n_true > p:
        raise InvalidInputError("n_true must lie in [0, p]")
    rng = child_rng(seed, NS_DATA)
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[:n_true] = 1.0
    mu = X @ beta
    y = mu + rng.standard_normal(n)
    return DataSet(X, y), mu, beta


def fit_relaxed_lasso(data: DataSet, lam: float, tol: float = 1e-8,
                      max_iter: int = 10_000) -> FitOutput:
    """Least squares refit on the lasso's active set (debiased lasso)."""
    sel = fit_lasso_mm(data, lam, tol=tol, max_iter=max_iter)
    active = np.flatnonzero(np.abs(sel.meta["beta"]) > 10 * sel.meta["floor"])
    X, y = data.X, data.y
    n, p = data.n, data.p
    beta = np.zeros(p)
    if active.size:
        XA = X[:, active]
        U, s, Vt = np.linalg.svd(XA, full_matrices=False)
        keep = s > 1e-10 * s[0]
        coef = Vt[keep].T @ ((U[:, keep].T @ y) / s[keep])
        beta[active] = coef
        S = U[:, keep] @ U[:, keep].T
        rank = int(keep.sum())
    else:
        S = np.zeros((n, n))
        rank = 0
    return FitOutput(
        fitted=X @ beta,
        smoother=SmootherMatrix(S),
        meta={"beta": beta, "active": tuple(active.tolist()), "rank": rank,
              "lambda": float(lam), "lasso_beta": sel.meta["beta"]},
    )


@dataclass(frozen=True)
class DfBreakdown:
    """Trace + derivative decomposition of the lasso's degrees of freedom."""

    lam: float
    trace_s: float
    delta: float
    n_active: int

    @property
    def df(self) -> float:
        return self.trace_s + self.delta


def _mm_refit(G, c, lam, beta0, tol, max_iter, floor):
    beta = beta0.copy()
    for _ in range(max_iter):
        psi = 0.5 / np.maximum(np.abs(beta), floor)
        A = G + lam * np.diag(psi)
        beta_new = scipy.linalg.solve(A, c, assume_a="pos", check_finite=False)
        delta = float(np.abs(beta_new - beta).max())
        beta = beta_new
        if delta < tol:
            return beta
    raise ConvergenceError(f"warm-started refit stalled (lam = {lam})")


def lasso_df_theorem(data: DataSet, lam: float, fd_step: float = 1e-4,
                     tol: float = 1e-11, max_iter: int = 20_000,
                     floor: float = LASSO_FLOOR) -> DfBreakdown:
    """Degrees of freedom of the lasso as trace(S) + delta.

    delta = sum_i sum_j (dS_ij / dy_i) y_j with
    dS/dy_i = -lam X A^-1 C D^(i) A^-1 X', A = X'X + lam Psi,
    C = diag{-sign(beta_j) / (2 beta_j^2)} (zero on floored coordinates),
    D^(i) = diag{dbeta_j / dy_i} by warm-started central differences with
    per-coordinate step fd_step * (1 + |y_i|).

    Since A^-1 X'y is the converged coefficient vector, the double sum
    collapses to delta = sum_active lam Psi_jj <W_j, dbeta_j/dy> with
    W = X A^-1 (the -lam C_j beta_j factor simplifies to lam Psi_jj).
    """
    fit = fit_lasso_mm(data, lam, tol=tol, max_iter=max_iter, floor=floor)
    if not fit.meta["converged"]:
        raise ConvergenceError(
            f"base lasso fit did not reach a fixed point (lam = {lam}); "
            "the derivative term is only defined at convergence"
        )
    X, y = data.X, data.y
    n = data.n
    G = X.T @ X
    beta_hat = fit.meta["raw_beta"]
    psi = fit.meta["psi"]
    active = ~fit.meta["floored"]

    A = G + lam * np.diag(psi)
    W = scipy.linalg.solve(A, X.T, assume_a="pos", check_finite=False).T  # X A^-1

    dbeta = np.empty((data.p, n))
    for i in range(n):
        h = fd_step * (1.0 + abs(y[i]))
        yp = y.copy(); yp[i] += h
        ym = y.copy(); ym[i] -= h
        bp = _mm_refit(G, X.T @ yp, lam, beta_hat, tol, max_iter, floor)
        bm = _mm_refit(G, X.T @ ym, lam, beta_hat, tol, max_iter, floor)
        dbeta[:, i] = (bp - bm) / (2.0 * h)

    delta = 0.0
    for j in np.flatnonzero(active):
        delta += lam * psi[j] * float(W[:, j] @ dbeta[j])
    trace_s = fit.smoother.trace
    return DfBreakdown(lam=float(lam), trace_s=trace_s, delta=float(delta),
                       n_active=int(fit.meta["n_active"]))


def gcv_path_lasso(data: DataSet, lambdas, with_delta: bool = True,
                   tol: float = 1e-9) -> list[dict]:
    """Model-selection path over a penalty grid.

    One row per lambda: active count, smoother trace, the derivative term
    (optional, finite differences are the slow part), and GCV evaluated
    with both df readings. Criteria that are undefined (df >= n) come out
    as +inf so the path stays comparable.
    """
    lambdas = np.asarray(list(lambdas), dtype=np.float64)
    if lambdas.size == 0 or np.any(lambdas <= 0):
        raise InvalidInputError("lambda grid must be positive")
    rows = []
    n = data.n
    for lam in lambdas:
        fit = fit_lasso_mm(data, float(lam), tol=tol)
        rss = float(((data.y - fit.fitted) ** 2).sum())
        n_active = fit.meta["n_active"]
        trace_s = fit.smoother.trace
        delta = np.nan
        df_theorem = np.nan
        if with_delta:
            br = lasso_df_theorem(data, float(lam), tol=min(tol, 1e-11))
            delta = br.delta
            df_theorem = br.df
        rows.append({
            "lambda": float(lam),
            "n_active": n_active,
            "trace_s": trace_s,
            "delta": delta,
            "df_theorem": df_theorem,
            "gcv_count": _safe_gcv(rss, n_active, n),
            "gcv_trace": _safe_gcv(rss, trace_s, n),
        })
    return rows


def _safe_gcv(rss, df, n):
    if df >= n:
        return float("inf")
    return gcv(rss, df, n).value


@dataclass(frozen=True)
class LassoMmProcedure(Procedure):
    lam: float = 1.0
    tol: float = 1e-8
    name: str = "lasso"

    @property
    def params(self) -> dict:
        return {"lambda": self.lam, "tol": self.tol}

    def fit(self, data: DataSet) -> FitOutput:
        return fit_lasso_mm(data, self.lam, tol=self.tol)


@dataclass(frozen=True)
class RelaxedLassoProcedure(Procedure):
    lam: float = 1.0
    name: str = "relaxed-lasso"

    @property
    def params(self) -> dict:
        return {"lambda": self.lam}

    def fit(self, data: DataSet) -> FitOutput:
        return fit_relaxed_lasso(data, self.lam)
