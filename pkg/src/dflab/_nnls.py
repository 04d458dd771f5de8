"""Nonnegative least squares by the Lawson-Hanson active-set method.

The active-set structure matters downstream: coordinates outside the
passive set are exactly zero, which is what makes coefficient-group
detection for shape-constrained fits unambiguous.

The passive-set subproblems are solved on the Gram form (one A'A and A'b
up front, Cholesky per iteration) because the Monte Carlo layers call
this thousands of times on designs with far more rows than columns; a
rank-deficient passive set falls back to a dense least-squares solve of
the original columns.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .core import ConvergenceError

__all__ = ["nnls"]


def _passive_solve(A, b, AtA, Atb, cols):
    try:
        c, low = cho_factor(AtA[np.ix_(cols, cols)])
        return cho_solve((c, low), Atb[cols])
    except (LinAlgError, np.linalg.LinAlgError):
        return np.linalg.lstsq(A[:, cols], b, rcond=None)[0]


def nnls(A, b, max_iter: int | None = None, gram=None):
    """Minimize ||A x - b||_2 subject to x >= 0.

    Pass ``gram = A.T @ A`` when solving many right-hand sides against one
    design; it is recomputed otherwise.

    Returns
    -------
    x : ndarray
        The solution; entries outside the final passive set are exactly 0.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m, n = A.shape
    if max_iter is None:
        max_iter = max(50 * n, 200)

    AtA = A.T @ A if gram is None else np.asarray(gram, dtype=np.float64)
    Atb = A.T @ b

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = Atb.copy()
    tol = 1e-11 * max(1.0, float(np.abs(w).max()))

    it = 0
    while True:
        w = Atb - AtA @ x
        cand = ~passive
        if not cand.any() or w[cand].max() <= tol:
            break
        j = int(np.argmax(np.where(cand, w, -np.inf)))
        passive[j] = True
        while True:
            it += 1
            if it > max_iter:
                raise ConvergenceError(
                    f"nnls did not terminate within {max_iter} iterations"
                )
            cols = np.flatnonzero(passive)
            z = np.zeros(n)
            z[cols] = _passive_solve(A, b, AtA, Atb, cols)
            if z[cols].min() > 0.0:
                x = z
                break
            neg = cols[z[cols] <= 0.0]
            denom = x[neg] - z[neg]
            safe = denom > 0
            ratio = np.where(safe, x[neg] / np.where(safe, denom, 1.0), 0.0)
            alpha = float(ratio.min())
            x = x + alpha * (z - x)
            x[x < 0] = 0.0
            drop = passive & (x <= 1e-14 * max(1.0, x.max()))
            x[drop] = 0.0
            passive[drop] = False
            if not passive.any():
                x[:] = 0.0
                break
    return x
