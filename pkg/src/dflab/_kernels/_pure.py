"""Pure numpy reference implementations of the hot kernels.

These are the fallback when the compiled extension is unavailable and the
ground truth the extension is tested against.
"""
import numpy as np


def tree_split_scan(xs, ys):
    """Best binary split of a presorted feature column.

    Parameters
    ----------
    xs : ndarray
        Feature values sorted ascending.
    ys : ndarray
        Responses aligned with ``xs``.

    Returns
    -------
    (cut, sse) : tuple of float
        Midpoint cut between the two consecutive distinct values whose
        split minimizes the summed child SSE, and that SSE. ``(nan, inf)``
        when no valid split exists (all values tied). Ties on SSE keep the
        smallest cut.
    """
    n = xs.shape[0]
    if n < 2:
        return (np.nan, np.inf)
    cy = np.cumsum(ys)
    cy2 = np.cumsum(ys * ys)
    ty, ty2 = cy[-1], cy2[-1]
    pos = np.nonzero(xs[1:] > xs[:-1])[0]
    if pos.size == 0:
        return (np.nan, np.inf)
    nl = (pos + 1).astype(np.float64)
    nr = n - nl
    sse = (cy2[pos] - cy[pos] ** 2 / nl) + (ty2 - cy2[pos] - (ty - cy[pos]) ** 2 / nr)
    k = int(np.argmin(sse))
    return (0.5 * (xs[pos[k]] + xs[pos[k] + 1]), float(sse[k]))


def mars_pair_sweep(Q, qty, y, h, xv, order, tol, stride=1):
    """Best knot for adding the reflected hinge pair h*(xv-t)+, h*(t-xv)+.

    Uses the identity span{h*(xv-t)+, h*(t-xv)+} = span{h*xv, h*(xv-t)+}
    (valid because the parent column h is already in the model), so the
    RSS gain splits into a knot-independent linear part and a swept hinge
    part. Candidate knots are the distinct observed values of ``xv`` over
    the support {h != 0}, scanned in descending order; ``stride`` > 1
    evaluates only every stride-th distinct value (a speed knob, the
    accumulation itself always covers every row).

    Parameters
    ----------
    Q : ndarray, shape (n, M)
        Orthonormal basis of the current design (intercept included).
    qty : ndarray, shape (M,)
        Q.T @ y.
    y, h, xv : ndarray, shape (n,)
        Response, parent term values, candidate variable values.
    order : ndarray of int
        Indices sorting ``xv`` descending.
    tol : float
        Relative dependence tolerance on appended-column norms.

    Returns
    -------
    (gain, knot, gain_linear) : tuple of float
        Best total RSS decrease, the knot achieving it (first best in
        descending knot order on ties), and the knot-independent part.
        ``(-1.0, nan, 0.0)`` when the parent has empty support.
    """
    sup = order[h[order] != 0.0]
    if sup.size == 0:
        return (-1.0, np.nan, 0.0)
    a = h * xv
    aa = float(a @ a)
    ca = Q.T @ a
    atil = a - Q @ ca
    na2 = float(atil @ atil)
    gain_a = 0.0
    use_a = aa > 0.0 and na2 > tol * tol * aa
    if use_a:
        ahat = atil / np.sqrt(na2)
        aty = float(ahat @ y)
        gain_a = aty * aty
        V = np.column_stack([Q, ahat])
        vty = np.append(qty, aty)
    else:
        V = Q
        vty = np.asarray(qty)
    xs = xv[sup]
    hs = h[sup]
    ys = y[sup]
    Vs = V[sup]

    first = np.empty(xs.size, dtype=bool)
    first[0] = True
    first[1:] = xs[1:] != xs[:-1]
    kpos = np.nonzero(first)[0][::max(int(stride), 1)]
    t = xs[kpos]

    C1 = np.cumsum(hs[:, None] * Vs, axis=0)
    Cx = np.cumsum((hs * xs)[:, None] * Vs, axis=0)
    cy1 = np.cumsum(hs * ys)
    cyx = np.cumsum(hs * xs * ys)
    hs2 = hs * hs
    cb0 = np.cumsum(hs2)
    cb1 = np.cumsum(hs2 * xs)
    cb2 = np.cumsum(hs2 * xs * xs)

    def pref(C):
        out = np.zeros((kpos.size,) + C.shape[1:])
        nz = kpos > 0
        out[nz] = C[kpos[nz] - 1]
        return out

    BQ = pref(Cx) - t[:, None] * pref(C1)
    by = pref(cyx) - t * pref(cy1)
    bb = pref(cb2) - 2.0 * t * pref(cb1) + t * t * pref(cb0)
    num = by - BQ @ vty
    den = bb - np.einsum("ij,ij->i", BQ, BQ)
    ok = (bb > 0.0) & (den > 1e-12 * bb)
    gain_b = np.zeros_like(den)
    gain_b[ok] = num[ok] ** 2 / den[ok]
    gains = gain_a + gain_b
    k = int(np.argmax(gains))
    return (float(gains[k]), float(t[k]), gain_a)
