# Compiled versions of the hot kernels. Semantics mirror _pure.py; see the
# docstrings there for the contract.
import numpy as np

cimport numpy as cnp

cnp.import_array()


def tree_split_scan(const double[::1] xs, const double[::1] ys):
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t i
    cdef double ty = 0.0, ty2 = 0.0
    cdef double cy = 0.0, cy2 = 0.0
    cdef double nl, nr, sse
    cdef double best_sse, best_cut
    if n < 2:
        return (np.nan, np.inf)
    for i in range(n):
        ty += ys[i]
        ty2 += ys[i] * ys[i]
    best_sse = np.inf
    best_cut = np.nan
    for i in range(n - 1):
        cy += ys[i]
        cy2 += ys[i] * ys[i]
        if xs[i + 1] <= xs[i]:
            continue
        nl = i + 1.0
        nr = n - nl
        sse = (cy2 - cy * cy / nl) + (ty2 - cy2 - (ty - cy) * (ty - cy) / nr)
        if sse < best_sse:
            best_sse = sse
            best_cut = 0.5 * (xs[i] + xs[i + 1])
    if best_cut != best_cut:
        return (np.nan, np.inf)
    return (best_cut, best_sse)


def mars_pair_sweep(const double[:, ::1] Q, const double[::1] qty,
                    const double[::1] y, const double[::1] h,
                    const double[::1] xv, const cnp.int64_t[::1] order,
                    double tol, Py_ssize_t stride=1):
    cdef Py_ssize_t n = Q.shape[0]
    cdef Py_ssize_t M = Q.shape[1]
    cdef Py_ssize_t i, j, idx
    cdef Py_ssize_t n_distinct = 0
    cdef double aa = 0.0, na2 = 0.0, aty = 0.0, gain_a = 0.0
    cdef double ai, hi, xi, yi, hq, t, bq, num, den, bb, gain
    cdef double sy1 = 0.0, syx = 0.0, sb0 = 0.0, sb1 = 0.0, sb2 = 0.0
    cdef double s1a = 0.0, sxa = 0.0
    cdef double best_gain = -1.0, best_t = np.nan
    cdef double prev_t = 0.0
    cdef bint use_a, have_prev = False
    cdef bint any_support = False

    if stride < 1:
        stride = 1

    work = np.zeros(M, dtype=np.float64)
    avec = np.empty(n, dtype=np.float64)
    s1q_arr = np.zeros(M, dtype=np.float64)
    sxq_arr = np.zeros(M, dtype=np.float64)
    cdef double[::1] ca = work
    cdef double[::1] ahat = avec
    cdef double[::1] s1q = s1q_arr
    cdef double[::1] sxq = sxq_arr

    # linear column a = h * xv, orthogonalized against Q
    for i in range(n):
        ai = h[i] * xv[i]
        ahat[i] = ai
        aa += ai * ai
    for j in range(M):
        ca[j] = 0.0
        for i in range(n):
            ca[j] += Q[i, j] * ahat[i]
    for i in range(n):
        ai = ahat[i]
        for j in range(M):
            ai -= Q[i, j] * ca[j]
        ahat[i] = ai
        na2 += ai * ai
    use_a = aa > 0.0 and na2 > tol * tol * aa
    if use_a:
        na2 = na2 ** 0.5
        for i in range(n):
            ahat[i] /= na2
            aty += ahat[i] * y[i]
        gain_a = aty * aty

    for i in range(n):
        idx = order[i]
        hi = h[idx]
        if hi == 0.0:
            continue
        any_support = True
        t = xv[idx]
        if (not have_prev) or t != prev_t:
            if n_distinct % stride == 0:
                # evaluate the knot before absorbing its own points
                num = syx - t * sy1
                bb = sb2 - 2.0 * t * sb1 + t * t * sb0
                den = bb
                for j in range(M):
                    bq = sxq[j] - t * s1q[j]
                    num -= bq * qty[j]
                    den -= bq * bq
                if use_a:
                    bq = sxa - t * s1a
                    num -= bq * aty
                    den -= bq * bq
                gain = gain_a
                if bb > 0.0 and den > 1e-12 * bb:
                    gain += num * num / den
                if gain > best_gain:
                    best_gain = gain
                    best_t = t
            n_distinct += 1
            prev_t = t
            have_prev = True
        xi = xv[idx]
        yi = y[idx]
        for j in range(M):
            hq = hi * Q[idx, j]
            s1q[j] += hq
            sxq[j] += hq * xi
        if use_a:
            hq = hi * ahat[idx]
            s1a += hq
            sxa += hq * xi
        sy1 += hi * yi
        syx += hi * yi * xi
        sb0 += hi * hi
        sb1 += hi * hi * xi
        sb2 += hi * hi * xi * xi

    if not any_support:
        return (-1.0, np.nan, 0.0)
    return (best_gain, best_t, gain_a)
