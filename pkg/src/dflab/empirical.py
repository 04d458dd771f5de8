"""Monte Carlo estimation of degrees of freedom for arbitrary fitting procedures.

The estimator simulates y ~ N(mu, I) with the design held fixed, fits the
procedure to every draw, and sums the per-coordinate sample covariances
between fitted values and responses. Outer replications give the standard
error. The split between "search" and "smoothing" df comes from subtracting
the average trace of the per-draw smoother (``empirical_msdf``).
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DataSet,
    DfEstimate,
    DflabError,
    FitOutput,
    InvalidInputError,
    child_rng,
)

__all__ = [
    "Procedure",
    "DfExperiment",
    "ExperimentResult",
    "estimate_df",
    "empirical_msdf",
    "run_experiment",
    "experiment_record",
]

# child-seed namespaces; every consumer of an experiment seed goes through one
# of these so streams never collide
NS_DESIGN = 0
NS_NOISE = 1
NS_THEORY = 2
NS_FOLDS = 3
NS_DATA = 4


class Procedure:
    """A deterministic fitting procedure.

    Subclasses implement :meth:`fit`; identical datasets must give identical
    outputs (no hidden state between calls). Procedures whose smoother does
    not depend on y may set ``linear_smoother = True`` to let the experiment
    engine fit once and reuse the smoother matrix across draws, which is
    bit-identical to refitting because fitted values are S @ y either way.
    """

    name: str = "procedure"
    linear_smoother: bool = False

    @property
    def params(self) -> dict:
        return {}

    def fit(self, data: DataSet) -> FitOutput:
        raise NotImplementedError


@dataclass(frozen=True)
class DfExperiment:
    """One empirical-df experiment: fixed design, simulated responses.

    ``X`` is generated once (standard Gaussian n x p) when not supplied and
    reused across all repetitions and replications. ``mu`` defaults to the
    zero vector.
    """

    procedure: Procedure
    n: int
    p: int = 1
    mu: np.ndarray | None = None
    X: np.ndarray | None = None
    m: int = 100
    reps: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise InvalidInputError("n and p must be positive")
        if self.m < 2:
            raise InvalidInputError("m must be >= 2 for sample covariances")
        if self.reps < 1:
            raise InvalidInputError("reps must be >= 1")

    def design(self) -> np.ndarray:
        if self.X is not None:
            X = np.asarray(self.X, dtype=np.float64)
            if X.shape != (self.n, self.p):
                raise InvalidInputError(
                    f"X has shape {X.shape}, expected {(self.n, self.p)}"
                )
            return X
        return child_rng(self.seed, NS_DESIGN).standard_normal((self.n, self.p))

    def mean(self) -> np.ndarray:
        if self.mu is None:
            return np.zeros(self.n)
        mu = np.asarray(self.mu, dtype=np.float64)
        if mu.shape != (self.n,):
            raise InvalidInputError(f"mu has shape {mu.shape}, expected ({self.n},)")
        return mu


@dataclass
class ExperimentResult:
    df: DfEstimate
    collected: dict = field(default_factory=dict)
    # per-replication values, kept so differences of estimates can be formed
    # on the shared draws with an honest standard error
    df_reps: np.ndarray = field(default_factory=lambda: np.empty(0))
    collected_reps: dict = field(default_factory=dict)


def _fit_column(procedure, X, Y, j, rep):
    try:
        return procedure.fit(DataSet(X, Y[:, j]))
    except Exception as e:
        raise DflabError(
            f"procedure {procedure.name!r} failed on replication {rep}, draw {j}: {e}"
        ) from e


def run_experiment(exp: DfExperiment, collectors: dict | None = None,
                   threads: int = 1) -> ExperimentResult:
    """Run the covariance estimator, optionally collecting per-fit scalars.

    ``collectors`` maps names to callables FitOutput -> float; each collected
    quantity is averaged within a replication, and the replication means give
    a mean and standard error exactly like the df value itself.
    """
    collectors = collectors or {}
    X = exp.design()
    mu = exp.mean()
    n, m, reps = exp.n, exp.m, exp.reps
    proc = exp.procedure

    fast_linear = proc.linear_smoother
    S = None
    fixed_collect = {}
    if fast_linear:
        probe = proc.fit(DataSet(X, mu))
        if probe.smoother is None:
            fast_linear = False
        else:
            S = probe.smoother.matrix
            for name, fn in collectors.items():
                fixed_collect[name] = _collected_value(fn, probe, name)

    df_reps = np.empty(reps)
    coll_reps = {name: np.empty(reps) for name in collectors}
    for r in range(reps):
        rng = child_rng(exp.seed, NS_NOISE, r)
        Y = mu[:, None] + rng.standard_normal((n, m))
        if fast_linear:
            F = S @ Y
            for name in collectors:
                coll_reps[name][r] = fixed_collect[name]
        else:
            F = np.empty((n, m))
            fits: list = [None] * m
            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    for j, out in enumerate(
                        pool.map(lambda j: _fit_column(proc, X, Y, j, r), range(m))
                    ):
                        fits[j] = out
            else:
                for j in range(m):
                    fits[j] = _fit_column(proc, X, Y, j, r)
            for j, out in enumerate(fits):
                F[:, j] = out.fitted
            for name, fn in collectors.items():
                vals = [_collected_value(fn, out, name) for out in fits]
                coll_reps[name][r] = float(np.mean(vals))
        Fc = F - F.mean(axis=1, keepdims=True)
        Yc = Y - Y.mean(axis=1, keepdims=True)
        df_reps[r] = float((Fc * Yc).sum() / (m - 1))

    df = _to_estimate(df_reps, exp)
    collected = {
        name: _to_estimate(vals, exp) for name, vals in coll_reps.items()
    }
    return ExperimentResult(df=df, collected=collected,
                            df_reps=df_reps, collected_reps=coll_reps)


def _collected_value(fn, out: FitOutput, name: str) -> float:
    v = float(fn(out))
    if not np.isfinite(v):
        raise InvalidInputError(f"collector {name!r} returned a non-finite value")
    return v


def _to_estimate(values: np.ndarray, exp: DfExperiment) -> DfEstimate:
    reps = values.shape[0]
    se = float(np.std(values, ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0
    return DfEstimate(value=float(np.mean(values)), std_error=se,
                      n_reps=reps, seed=exp.seed)


def estimate_df(exp: DfExperiment, threads: int = 1) -> DfEstimate:
    """Covariance-based empirical degrees of freedom of ``exp.procedure``."""
    return run_experiment(exp, threads=threads).df


def empirical_msdf(exp: DfExperiment, trace_extractor, threads: int = 1) -> DfEstimate:
    """Search df: empirical df minus the mean smoother trace on shared draws.

    ``trace_extractor`` maps a FitOutput to the trace of the procedure's
    conditional smoother for that draw (e.g. number of leaves for a tree,
    group count for a monotone spline, rank of the selected design for a
    subset selector).
    """
    res = run_experiment(exp, collectors={"trace": trace_extractor}, threads=threads)
    diff = res.df_reps - res.collected_reps["trace"]
    return _to_estimate(diff, exp)


def experiment_record(exp: DfExperiment, est: DfEstimate) -> dict:
    """JSON-ready record of an experiment and its estimate."""
    return {
        "procedure": exp.procedure.name,
        "params": exp.procedure.params,
        "n": exp.n,
        "p": exp.p,
        "m": exp.m,
        "reps": exp.reps,
        "seed": exp.seed,
        "df_hat": est.value,
        "se": est.std_error,
    }
