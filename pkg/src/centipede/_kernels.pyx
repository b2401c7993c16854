# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled level recursion. Mirrors ``_kernels_py.level_recursion``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, NAN

cnp.import_array()

cdef int TIE_PASS = 0
cdef int TIE_UNIFORM = 1
cdef int TIE_TAKE = 2
cdef int FORM_DR = 0
cdef int FORM_FS = 2


cdef inline double _logistic(double z) nogil:
    cdef double e
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cdef inline void _choose(double take, double cont, double lam, double tie_tol,
                         int tie_rule, double* t, double* W) nogil:
    cdef double d
    if lam < 0:
        d = take - cont
        if fabs(d) <= tie_tol:
            if tie_rule == TIE_PASS:
                t[0] = 0.0
            elif tie_rule == TIE_TAKE:
                t[0] = 1.0
            else:
                t[0] = 0.5
            W[0] = take if take > cont else cont
        elif d > 0:
            t[0] = 1.0
            W[0] = take
        else:
            t[0] = 0.0
            W[0] = cont
    else:
        t[0] = _logistic(lam * (take - cont))
        W[0] = t[0] * take + (1.0 - t[0]) * cont


cdef void _conditional(double[::1] R, double[::1] q, int D) nogil:
    cdef double s = 0.0
    cdef int m
    for m in range(D, -1, -1):
        s += R[m]
        if s > 0:
            q[m] = R[m] / s
        else:
            q[m] = 1.0


cdef void _dr_response(const double[::1] x, const double[::1] y, double[::1] Rbar, int role,
                       int D, double lam, double tie_tol, int tie_rule,
                       double[::1] q, double[:] t) nogil:
    cdef double W, cont, tm
    cdef int m
    _conditional(Rbar, q, D)
    if role == 1:
        W = x[2 * D]
        for m in range(D - 1, -1, -1):
            cont = q[m] * x[2 * m + 1] + (1.0 - q[m]) * W
            _choose(x[2 * m], cont, lam, tie_tol, tie_rule, &tm, &W)
            t[m] = tm
    else:
        W = y[2 * D]
        for m in range(D - 1, -1, -1):
            if m == D - 1:
                cont = y[2 * D]
            else:
                cont = q[m + 1] * y[2 * m + 2] + (1.0 - q[m + 1]) * W
            _choose(y[2 * m + 1], cont, lam, tie_tol, tie_rule, &tm, &W)
            t[m] = tm


cdef void _take_to_reduced(double[:] t, double[:] r, int D) nogil:
    cdef double s = 1.0
    cdef int m
    for m in range(D):
        r[m] = s * t[m]
        s *= 1.0 - t[m]
    r[D] = s


cdef void _static_response(double[:, ::1] M, bint transpose, double[::1] Rbar,
                           double[::1] counts, int D, double lam, double tie_tol,
                           int tie_rule, double[::1] U, double[:] out) nogil:
    cdef int i, j, n = D + 1, pick
    cdef double umax, tot
    for i in range(n):
        U[i] = 0.0
        for j in range(n):
            if transpose:
                U[i] += M[j, i] * Rbar[j]
            else:
                U[i] += M[i, j] * Rbar[j]
    umax = U[0]
    for i in range(1, n):
        if U[i] > umax:
            umax = U[i]
    tot = 0.0
    if lam < 0:
        pick = -1
        for i in range(n):
            out[i] = 0.0
            if U[i] >= umax - tie_tol:
                if tie_rule == TIE_UNIFORM:
                    out[i] = counts[i]
                    tot += counts[i]
                elif tie_rule == TIE_PASS:
                    pick = i
                elif pick < 0:
                    pick = i
        if tie_rule != TIE_UNIFORM:
            out[pick] = 1.0
            tot = 1.0
    else:
        for i in range(n):
            out[i] = counts[i] * exp(lam * (U[i] - umax))
            tot += out[i]
    for i in range(n):
        out[i] /= tot


def level_recursion(x, y, prior, int form, double lam, double tie_tol, int tie_rule):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] pv = np.ascontiguousarray(prior, dtype=np.float64)
    cdef int D = (xv.shape[0] - 1) // 2
    cdef int K = pv.shape[0] - 1
    r1_arr = np.empty((K + 1, D + 1))
    r2_arr = np.empty((K + 1, D + 1))
    t1_arr = np.empty((K + 1, D))
    t2_arr = np.empty((K + 1, D))
    cdef double[:, ::1] r1 = r1_arr
    cdef double[:, ::1] r2 = r2_arr
    cdef double[:, ::1] t1 = t1_arr
    cdef double[:, ::1] t2 = t2_arr
    cdef double[::1] counts = np.ones(D + 1)
    cdef double[::1] agg1 = np.zeros(D + 1)
    cdef double[::1] agg2 = np.zeros(D + 1)
    cdef double[::1] R1 = np.zeros(D + 1)
    cdef double[::1] R2 = np.zeros(D + 1)
    cdef double[::1] q = np.zeros(D + 1)
    cdef double[::1] U = np.zeros(D + 1)
    cdef double[:, ::1] A = np.empty((D + 1, D + 1))
    cdef double[:, ::1] B = np.empty((D + 1, D + 1))
    cdef int k, m, m1, m2, n1, n2, node
    cdef double mass = 0.0, tot, s

    with nogil:
        if form == FORM_FS:
            for m in range(D):
                counts[m] = 2.0 ** (D - 1 - m)
            counts[D] = 1.0
        for m1 in range(D + 1):
            n1 = 2 * m1 if m1 < D else 2 * D
            for m2 in range(D + 1):
                n2 = 2 * m2 + 1 if m2 < D else 2 * D
                node = n1 if n1 < n2 else n2
                A[m1, m2] = xv[node]
                B[m1, m2] = yv[node]
        if form == FORM_DR:
            for m in range(D):
                t1[0, m] = 0.5
                t2[0, m] = 0.5
            _take_to_reduced(t1[0], r1[0], D)
            _take_to_reduced(t2[0], r2[0], D)
        else:
            tot = 0.0
            for m in range(D + 1):
                tot += counts[m]
            for m in range(D + 1):
                r1[0, m] = counts[m] / tot
                r2[0, m] = counts[m] / tot

        for k in range(1, K + 1):
            for m in range(D + 1):
                agg1[m] += pv[k - 1] * r1[k - 1, m]
                agg2[m] += pv[k - 1] * r2[k - 1, m]
            mass += pv[k - 1]
            if mass <= 0:
                for m in range(D + 1):
                    r1[k, m] = r1[0, m]
                    r2[k, m] = r2[0, m]
                for m in range(D):
                    t1[k, m] = t1[0, m]
                    t2[k, m] = t2[0, m]
                continue
            for m in range(D + 1):
                R1[m] = agg1[m] / mass
                R2[m] = agg2[m] / mass
            if form == FORM_DR:
                _dr_response(xv, yv, R2, 1, D, lam, tie_tol, tie_rule, q, t1[k])
                _dr_response(xv, yv, R1, 2, D, lam, tie_tol, tie_rule, q, t2[k])
                _take_to_reduced(t1[k], r1[k], D)
                _take_to_reduced(t2[k], r2[k], D)
            else:
                _static_response(A, False, R2, counts, D, lam, tie_tol, tie_rule, U, r1[k])
                _static_response(B, True, R1, counts, D, lam, tie_tol, tie_rule, U, r2[k])

        if form != FORM_DR:
            for k in range(K + 1):
                s = r1[k, D]
                for m in range(D - 1, -1, -1):
                    s += r1[k, m]
                    t1[k, m] = r1[k, m] / s if s > 0 else NAN
                s = r2[k, D]
                for m in range(D - 1, -1, -1):
                    s += r2[k, m]
                    t2[k, m] = r2[k, m] / s if s > 0 else NAN
    return r1_arr, r2_arr, t1_arr, t2_arr
