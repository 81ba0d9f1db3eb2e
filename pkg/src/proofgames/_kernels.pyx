# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: 1-WL refinement in lockstep and Stackelberg response layers."""
import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, isnan
from libc.stdlib cimport free, malloc

ctypedef long long i64


cdef inline int _cmp_sig(i64 *sig, i64 *off, i64 u, i64 v) nogil:
    cdef i64 lu = off[u + 1] - off[u]
    cdef i64 lv = off[v + 1] - off[v]
    cdef i64 k, n = lu if lu < lv else lv
    cdef i64 a, b
    for k in range(n):
        a = sig[off[u] + k]
        b = sig[off[v] + k]
        if a < b:
            return -1
        if a > b:
            return 1
    if lu < lv:
        return -1
    if lu > lv:
        return 1
    return 0


cdef inline void _isort(i64 *buf, i64 lo, i64 hi) nogil:
    cdef i64 i, j, x
    for i in range(lo + 1, hi):
        x = buf[i]
        j = i - 1
        while j >= lo and buf[j] > x:
            buf[j + 1] = buf[j]
            j -= 1
        buf[j + 1] = x


def wl_distinguishing_round(const i64[:] indptr_a, const i64[:] indices_a,
                            const i64[:] indptr_b, const i64[:] indices_b,
                            i64 max_rounds):
    """First refinement round whose colour histograms differ, or 0."""
    cdef i64 na = indptr_a.shape[0] - 1
    cdef i64 nb = indptr_b.shape[0] - 1
    if na != nb:
        return 1
    cdef i64 n = na + nb
    if n == 0:
        return 0
    cdef i64 ea = indices_a.shape[0]
    cdef i64 eb = indices_b.shape[0]
    cdef i64 *col = <i64 *> malloc(n * sizeof(i64))
    cdef i64 *newcol = <i64 *> malloc(n * sizeof(i64))
    cdef i64 *off = <i64 *> malloc((n + 1) * sizeof(i64))
    cdef i64 *sig = <i64 *> malloc((n + ea + eb) * sizeof(i64))
    cdef i64 *order = <i64 *> malloc(n * sizeof(i64))
    cdef i64 *hist = <i64 *> malloc(n * sizeof(i64))
    cdef i64 v, u, k, r, j, pos, ncol = 1, kcol, start, deg, result = 0
    cdef int c
    try:
        for v in range(n):
            col[v] = 0
        off[0] = 0
        for v in range(na):
            off[v + 1] = off[v] + 1 + indptr_a[v + 1] - indptr_a[v]
        for v in range(nb):
            off[na + v + 1] = off[na + v] + 1 + indptr_b[v + 1] - indptr_b[v]
        for r in range(1, max_rounds + 1):
            for v in range(n):
                pos = off[v]
                sig[pos] = col[v]
                if v < na:
                    start = indptr_a[v]
                    deg = indptr_a[v + 1] - start
                    for k in range(deg):
                        sig[pos + 1 + k] = col[indices_a[start + k]]
                else:
                    u = v - na
                    start = indptr_b[u]
                    deg = indptr_b[u + 1] - start
                    for k in range(deg):
                        sig[pos + 1 + k] = col[na + indices_b[start + k]]
                _isort(sig, pos + 1, pos + 1 + deg)
            for v in range(n):
                order[v] = v
            # insertion sort of vertices by signature; n stays small (<= 64)
            for v in range(1, n):
                u = order[v]
                j = v - 1
                while j >= 0 and _cmp_sig(sig, off, order[j], u) > 0:
                    order[j + 1] = order[j]
                    j -= 1
                order[j + 1] = u
            kcol = 0
            newcol[order[0]] = 0
            for v in range(1, n):
                c = _cmp_sig(sig, off, order[v - 1], order[v])
                if c != 0:
                    kcol += 1
                newcol[order[v]] = kcol
            kcol += 1
            for v in range(kcol):
                hist[v] = 0
            for v in range(na):
                hist[newcol[v]] += 1
            for v in range(na, n):
                hist[newcol[v]] -= 1
            for v in range(kcol):
                if hist[v] != 0:
                    result = r
                    break
            if result:
                break
            if kcol == ncol:
                break
            ncol = kcol
            for v in range(n):
                col[v] = newcol[v]
    finally:
        free(col)
        free(newcol)
        free(off)
        free(sig)
        free(order)
        free(hist)
    return result


def response_layer(const double[:, :] follower, const double[:, :] leader,
                   const unsigned char[:, :] allowed, double tol, bint strict,
                   bint pessimistic, double atol=1e-12):
    """Follower tolerance-best-response masks per leader row and the leader's values."""
    cdef Py_ssize_t na = follower.shape[0]
    cdef Py_ssize_t nb = follower.shape[1]
    mask_arr = np.zeros((na, nb), dtype=np.uint8)
    values_arr = np.full(na, INFINITY, dtype=np.float64)
    cdef unsigned char[:, :] mask = mask_arr
    cdef double[:] values = values_arr
    cdef Py_ssize_t a, b
    cdef double m, f, gain, val, lv
    cdef bint any_ok, ok
    for a in range(na):
        m = INFINITY
        any_ok = False
        for b in range(nb):
            if allowed[a, b]:
                any_ok = True
                f = follower[a, b]
                if f < m:
                    m = f
        if not any_ok:
            continue
        val = -INFINITY if pessimistic else INFINITY
        for b in range(nb):
            if not allowed[a, b]:
                continue
            f = follower[a, b]
            if f == m:
                ok = True
            else:
                gain = f - m
                if isnan(gain):
                    ok = False
                elif strict:
                    ok = gain < tol - atol
                else:
                    ok = gain <= tol + atol
            if ok:
                mask[a, b] = 1
                lv = leader[a, b]
                if pessimistic:
                    if lv > val or isnan(lv):
                        val = lv
                else:
                    if lv < val:
                        val = lv
        values[a] = val
    return mask_arr, values_arr
