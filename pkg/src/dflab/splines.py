"""Cubic B-spline regression: penalized, smoothing, and monotone variants.

The monotone fit reparameterizes the coefficient vector through the
cumulative-sum map gamma = L theta (L lower-triangular ones) so the shape
constraint becomes theta_2.. >= 0, solved by nonnegative least squares.
Runs of equal fitted coefficients form groups; the number of groups is the
effective dimension of the constrained fit, and its expectation is the
degrees of freedom of the procedure.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

from ._nnls import nnls
from .core import (
    DataSet,
    FitOutput,
    InsufficientDataError,
    InvalidInputError,
    SingularDesignError,
    SmootherMatrix,
    child_rng,
    child_seed,
)
from .empirical import (
    NS_DATA,
    NS_DESIGN,
    DfEstimate,
    DfExperiment,
    Procedure,
    estimate_df,
    run_experiment,
)

__all__ = [
    "SplineBasis",
    "GroupMatrix",
    "build_basis",
    "smoothing_basis",
    "build_penalty",
    "fit_spline",
    "fit_monotone_spline",
    "count_unique_coefficients",
    "monotone_df_theoretical",
    "SplineProcedure",
    "MonotoneSplineProcedure",
    "spline_df_table",
]

_ORDER = 4  # cubic
_GROUP_TOL = 1e-6

_PREP_CACHE: dict = {}
_PREP_MAX_ENTRIES = 8
_PREP_MAX_N = 4096


def _prep_cached(kind: str, x: np.ndarray, J, lam: float, builder):
    """Reuse per-design preparation across repeated fits on the same x.

    The Monte Carlo layers refit thousands of responses on one fixed
    design, and everything that depends only on (x, J, lam) can be built
    once: the basis, the design matrix, the penalty square root, and for
    the unconstrained variants the whole smoother. Keyed by the raw bytes
    of x with bounded FIFO eviction; bypassed for large n so the cache
    never pins more than a few small matrices.
    """
    if x.size > _PREP_MAX_N:
        return builder()
    key = (kind, x.tobytes(), -1 if J is None else int(J), float(lam))
    hit = _PREP_CACHE.get(key)
    if hit is None:
        hit = builder()
        if len(_PREP_CACHE) >= _PREP_MAX_ENTRIES:
            _PREP_CACHE.pop(next(iter(_PREP_CACHE)))
        _PREP_CACHE[key] = hit
    return hit


@dataclass(frozen=True)
class SplineBasis:
    """A cubic B-spline basis pinned to a full (padded) knot vector."""

    knots: np.ndarray

    @property
    def J(self) -> int:
        return self.knots.size - _ORDER

    def design(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        lo, hi = self.knots[_ORDER - 1], self.knots[-_ORDER]
        if x.min() < lo or x.max() > hi:
            raise InvalidInputError("x outside the basis interval")
        return BSpline.design_matrix(x, self.knots, _ORDER - 1).toarray()


def build_basis(x, J: int) -> SplineBasis:
    """Quantile-knot cubic basis with J functions.

    Boundary knots sit at min(x) and max(x) with full multiplicity; the
    J - 4 interior knots are quantiles of the distinct x values.
    """
    x = np.asarray(x, dtype=np.float64)
    if J < _ORDER:
        raise InvalidInputError(f"J must be >= {_ORDER}, got {J}")
    xu = np.unique(x)
    if xu.size < J - 2:
        raise InsufficientDataError(
            f"need at least {J - 2} distinct x values for J = {J}, have {xu.size}"
        )
    if xu.size < 2:
        raise InsufficientDataError("need at least 2 distinct x values")
    n_inner = J - _ORDER
    probs = np.arange(1, n_inner + 1) / (n_inner + 1)
    inner = np.quantile(xu, probs)
    t = np.concatenate([[xu[0]] * _ORDER, inner, [xu[-1]] * _ORDER])
    return SplineBasis(knots=t)


def smoothing_basis(x) -> SplineBasis:
    """Knots at every distinct x value; J = (#distinct x) + 4.

    All data points become interior knots, with the four-fold boundary
    knots stacked one mean gap outside the data range on each side.
    """
    xu = np.unique(np.asarray(x, dtype=np.float64))
    if xu.size < 2:
        raise InsufficientDataError("need at least 2 distinct x values")
    h = (xu[-1] - xu[0]) / (xu.size - 1)
    t = np.concatenate([[xu[0] - h] * _ORDER, xu, [xu[-1] + h] * _ORDER])
    return SplineBasis(knots=t)


def build_penalty(basis: SplineBasis) -> np.ndarray:
    """Second-derivative penalty matrix O_jk = integral of B_j'' B_k''.

    Cubic B-spline second derivatives are piecewise linear, so two-point
    Gauss-Legendre quadrature per knot span is exact for their products.
    """
    t = basis.knots
    J = basis.J
    d2 = BSpline(t, np.eye(J), _ORDER - 1).derivative(2)
    omega = np.zeros((J, J))
    g = 1.0 / np.sqrt(3.0)
    for i in range(_ORDER - 1, t.size - _ORDER):
        a, b = t[i], t[i + 1]
        if b <= a:
            continue
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        for s in (mid - half * g, mid + half * g):
            row = d2(s)
            omega += half * np.outer(row, row)
    return 0.5 * (omega + omega.T)


def _resolve_basis(x, J, lam) -> SplineBasis:
    if J is None:
        if lam <= 0:
            raise InvalidInputError(
                "J = None (knots at all distinct x) requires a positive penalty"
            )
        return smoothing_basis(x)
    return build_basis(x, J)


def fit_spline(data: DataSet, J: int | None = None, lam: float = 0.0) -> FitOutput:
    """Penalized cubic B-spline regression on the first predictor column.

    lam = 0 is plain least squares on the J-dimensional basis (trace of the
    smoother is exactly J); J = None with lam > 0 places knots at every
    distinct x, the smoothing-spline convention.
    """
    if lam < 0:
        raise InvalidInputError("penalty must be nonnegative")
    x = data.X[:, 0]

    def build():
        basis = _resolve_basis(x, J, lam)
        B = basis.design(x)
        if lam == 0.0:
            Q, R = np.linalg.qr(B)
            rdiag = np.abs(np.diag(R))
            if rdiag.min() <= 1e-10 * max(rdiag.max(), 1e-300):
                raise SingularDesignError(
                    "basis design is rank-deficient; reduce J or add data"
                )
            S = Q @ Q.T
        else:
            G = B.T @ B
            omega = build_penalty(basis)
            S = B @ np.linalg.solve(G + lam * omega, B.T)
            S = 0.5 * (S + S.T)
        S.flags.writeable = False
        return basis.J, S

    Jb, S = _prep_cached("spline", x, J, lam, build)
    meta = {"J": Jb, "lambda": float(lam)}
    return FitOutput(fitted=S @ data.y, smoother=SmootherMatrix(S), meta=meta)


@dataclass(frozen=True)
class GroupMatrix:
    """Selector G (g x J) collapsing contiguous coefficient runs to groups.

    Row r has ones over the r-th block of consecutive coefficient indices;
    every column carries exactly one 1.
    """

    matrix: np.ndarray
    blocks: tuple

    @property
    def g(self) -> int:
        return self.matrix.shape[0]


def _group_matrix_from_boundaries(boundaries: np.ndarray, J: int) -> GroupMatrix:
    # boundaries: sorted positions (0-based) where a new group starts; 0 included
    blocks = []
    for r, start in enumerate(boundaries):
        end = boundaries[r + 1] if r + 1 < boundaries.size else J
        blocks.append((int(start), int(end)))
    G = np.zeros((len(blocks), J))
    for r, (start, end) in enumerate(blocks):
        G[r, start:end] = 1.0
    return GroupMatrix(matrix=G, blocks=tuple(blocks))


def fit_monotone_spline(data: DataSet, J: int | None = None,
                        lam: float = 0.0) -> FitOutput:
    """Monotone (nondecreasing) cubic B-spline fit.

    Solves min ||y - B gamma||^2 + lam gamma' Omega gamma subject to
    gamma_1 <= ... <= gamma_J via gamma = L theta, theta_2.. >= 0. The
    first (unconstrained) coordinate is profiled out analytically; the
    rest is nonnegative least squares.

    The fit metadata carries the group structure; for lam = 0 the output
    smoother is the projection onto the selected group subspace
    B G' (G B'B G')^-1 G B, whose trace equals the group count.
    """
    if lam < 0:
        raise InvalidInputError("penalty must be nonnegative")
    x = data.X[:, 0]
    y = data.y
    n = data.n

    def build():
        basis = _resolve_basis(x, J, lam)
        B = basis.design(x)
        Jb = basis.J

        # stacked system: rows [B L; sqrt(lam) R L], R'R = Omega
        L = np.tril(np.ones((Jb, Jb)))
        top = B @ L
        if lam > 0.0:
            omega = build_penalty(basis)
            evals, evecs = np.linalg.eigh(omega)
            evals = np.clip(evals, 0.0, None)
            R = (evecs * np.sqrt(evals)) @ evecs.T
            A = np.vstack([top, np.sqrt(lam) * (R @ L)])
        else:
            A = top

        # first column of A is [1_n; 0]: partition of unity makes B L e1
        # the ones vector and Omega annihilates constants, so centering
        # the top block profiles theta_1 out exactly
        col_means = A[:n, 1:].mean(axis=0)
        Ac = A[:, 1:].copy()
        Ac[:n] -= col_means
        gram = Ac.T @ Ac
        for arr in (B, col_means, Ac, gram):
            arr.flags.writeable = False
        return basis, B, Jb, col_means, Ac, gram

    basis, B, Jb, col_means, Ac, gram = _prep_cached("monotone", x, J, lam, build)

    ybar = float(y.mean())
    if lam > 0.0:
        rc = np.concatenate([y - ybar, np.zeros(Jb)])
    else:
        rc = y - ybar

    theta_pos = nnls(Ac, rc, gram=gram)
    theta1 = ybar - float(col_means @ theta_pos)
    theta = np.concatenate([[theta1], theta_pos])
    gamma = np.cumsum(theta)
    fitted = B @ gamma

    starts = np.concatenate([[0], 1 + np.flatnonzero(theta_pos > 0.0)])
    groups = _group_matrix_from_boundaries(starts, Jb)

    meta = {"J": Jb, "lambda": float(lam), "gamma": gamma,
            "groups": groups, "g": groups.g}
    smoother = None
    if lam == 0.0:
        BG = B @ groups.matrix.T
        M = BG.T @ BG
        try:
            coef = np.linalg.solve(M, BG.T)
        except np.linalg.LinAlgError as e:
            raise SingularDesignError(f"group design singular: {e}") from None
        S = BG @ coef
        smoother = SmootherMatrix(0.5 * (S + S.T))
    return FitOutput(fitted=fitted, smoother=smoother, meta=meta)


def count_unique_coefficients(gamma, tol: float = _GROUP_TOL) -> int:
    """Number of runs of consecutive equal values, at relative tolerance."""
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.ndim != 1 or gamma.size == 0:
        raise InvalidInputError("gamma must be a nonempty vector")
    scale = 1.0 + float(np.abs(gamma).max())
    return int(1 + np.count_nonzero(np.abs(np.diff(gamma)) > tol * scale))


def monotone_df_theoretical(exp: DfExperiment, threads: int = 1) -> DfEstimate:
    """Monte Carlo estimate of E[group count] for a monotone-spline procedure.

    Shares the experiment's fixed design and seeding scheme, so the value
    is directly comparable with the covariance-based df from the same run.
    """
    if not isinstance(exp.procedure, MonotoneSplineProcedure):
        raise InvalidInputError("experiment procedure must be a monotone spline")
    res = run_experiment(exp, collectors={"g": lambda out: out.meta["g"]},
                         threads=threads)
    return res.collected["g"]


@dataclass(frozen=True)
class SplineProcedure(Procedure):
    J: int | None = None
    lam: float = 0.0
    name: str = "spline"
    linear_smoother: bool = True

    @property
    def params(self) -> dict:
        return {"J": self.J, "lambda": self.lam}

    def fit(self, data: DataSet) -> FitOutput:
        return fit_spline(data, self.J, self.lam)


@dataclass(frozen=True)
class MonotoneSplineProcedure(Procedure):
    J: int | None = None
    lam: float = 0.0
    name: str = "monotone-spline"
    linear_smoother: bool = False

    @property
    def params(self) -> dict:
        return {"J": self.J, "lambda": self.lam}

    def fit(self, data: DataSet) -> FitOutput:
        return fit_monotone_spline(data, self.J, self.lam)


def spline_df_table(J_grid=(5, 10, 15), lam_grid=(0.001, 0.01, 0.1),
                    n: int = 100, m: int = 100, reps: int = 100,
                    seed: int = 0, threads: int = 1) -> list[dict]:
    """Empirical vs reference df for the four spline variants.

    All rows share one x ~ Uniform[0, 1] design. The reference column is
    the basis dimension for unpenalized fits, the smoother trace on this
    design for penalized fits, and the Monte Carlo mean group count for
    the monotone unpenalized fit; penalized monotone fits have no cheap
    reference, so the column is left empty there.
    """
    x = child_rng(seed, NS_DESIGN).random(n)
    X = x[:, None]
    zero = np.zeros(n)
    rows: list[dict] = []

    def run(procedure, idx):
        cell_seed = int(child_seed(seed, NS_DATA, idx).generate_state(1)[0])
        return DfExperiment(procedure=procedure, n=n, p=1, X=X, m=m,
                            reps=reps, seed=cell_seed)

    idx = 0
    for J in J_grid:
        exp = run(SplineProcedure(J=J), idx)
        est = estimate_df(exp, threads=threads)
        rows.append({"method": "cubic", "parameter": float(J),
                     "theoretical": float(J), "empirical": est.value,
                     "se": est.std_error})
        idx += 1
    for lam in lam_grid:
        trace = fit_spline(DataSet(X, zero), J=None, lam=lam).smoother.trace
        exp = run(SplineProcedure(J=None, lam=lam), idx)
        est = estimate_df(exp, threads=threads)
        rows.append({"method": "smoothing", "parameter": float(lam),
                     "theoretical": trace, "empirical": est.value,
                     "se": est.std_error})
        idx += 1
    for J in J_grid:
        exp = run(MonotoneSplineProcedure(J=J), idx)
        groups = monotone_df_theoretical(exp, threads=threads)
        est = estimate_df(exp, threads=threads)
        rows.append({"method": "monotone-cubic", "parameter": float(J),
                     "theoretical": groups.value, "empirical": est.value,
                     "se": est.std_error})
        idx += 1
    for lam in lam_grid:
        exp = run(MonotoneSplineProcedure(J=None, lam=lam), idx)
        est = estimate_df(exp, threads=threads)
        rows.append({"method": "monotone-smoothing", "parameter": float(lam),
                     "theoretical": None, "empirical": est.value,
                     "se": est.std_error})
        idx += 1
    return rows
