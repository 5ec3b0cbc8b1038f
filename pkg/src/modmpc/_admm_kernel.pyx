# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled ADMM iteration loop. Same contract as ``modmpc._admm_py.admm_loop``."""

from libc.math cimport fabs, isinf

cdef enum:
    SOLVED = 0
    MAX_ITER = 1
    INFEASIBLE = 2
    STALLED = 3


cdef inline double _amax(double[::1] v, Py_ssize_t n) nogil:
    cdef double m = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        if fabs(v[i]) > m:
            m = fabs(v[i])
    return m


cdef void _matvec(double[:, ::1] M, double[::1] v, double[::1] out,
                  Py_ssize_t rows, Py_ssize_t cols) nogil:
    cdef Py_ssize_t i, j
    cdef double s
    for i in range(rows):
        s = 0.0
        for j in range(cols):
            s += M[i, j] * v[j]
        out[i] = s


cdef void _matvec_t(double[:, ::1] M, double[::1] v, double[::1] out,
                    Py_ssize_t rows, Py_ssize_t cols) nogil:
    # out = M^T v, M is rows x cols
    cdef Py_ssize_t i, j
    cdef double vi
    for j in range(cols):
        out[j] = 0.0
    for i in range(rows):
        vi = v[i]
        if vi != 0.0:
            for j in range(cols):
                out[j] += M[i, j] * vi


def admm_loop(double[:, ::1] Kinv, double[:, ::1] A, double[:, ::1] P,
              double[::1] q, double[::1] l, double[::1] u, double[::1] rho,
              double sigma, double alpha, double eps_abs, double eps_rel,
              double eps_pinf, int max_iter, int check_every,
              double[::1] x, double[::1] z, double[::1] y):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t m = z.shape[0]
    cdef Py_ssize_t i
    cdef int it, stall = 0
    cdef int status = MAX_ITER, iters = max_iter
    cdef double dx, dz, zr_i, zn, yn, r_prim, r_dual, s_prim, s_dual
    cdef double ndy, support, scale, t
    cdef bint ok

    import numpy as np
    cdef double[::1] w = np.empty(m)
    cdef double[::1] rhs = np.empty(n)
    cdef double[::1] xt = np.empty(n)
    cdef double[::1] zt = np.empty(m)
    cdef double[::1] dy = np.empty(m)
    cdef double[::1] tmp_n = np.empty(n)
    cdef double[::1] tmp_n2 = np.empty(n)
    cdef double[::1] tmp_m = np.empty(m)

    with nogil:
        for it in range(1, max_iter + 1):
            for i in range(m):
                w[i] = rho[i] * z[i] - y[i]
            _matvec_t(A, w, rhs, m, n)
            for i in range(n):
                rhs[i] = sigma * x[i] - q[i] + rhs[i]
            _matvec(Kinv, rhs, xt, n, n)
            _matvec(A, xt, zt, m, n)

            dx = 0.0
            for i in range(n):
                t = alpha * xt[i] + (1.0 - alpha) * x[i]
                if fabs(t - x[i]) > dx:
                    dx = fabs(t - x[i])
                x[i] = t
            dz = 0.0
            for i in range(m):
                zr_i = alpha * zt[i] + (1.0 - alpha) * z[i]
                zn = zr_i + y[i] / rho[i]
                if zn < l[i]:
                    zn = l[i]
                if zn > u[i]:
                    zn = u[i]
                yn = y[i] + rho[i] * (zr_i - zn)
                dy[i] = yn - y[i]
                y[i] = yn
                if fabs(zn - z[i]) > dz:
                    dz = fabs(zn - z[i])
                z[i] = zn

            if it % check_every:
                continue

            _matvec(A, x, tmp_m, m, n)
            r_prim = 0.0
            s_prim = 0.0
            for i in range(m):
                if fabs(tmp_m[i] - z[i]) > r_prim:
                    r_prim = fabs(tmp_m[i] - z[i])
                if fabs(tmp_m[i]) > s_prim:
                    s_prim = fabs(tmp_m[i])
                if fabs(z[i]) > s_prim:
                    s_prim = fabs(z[i])
            _matvec(P, x, tmp_n, n, n)
            _matvec_t(A, y, tmp_n2, m, n)
            r_dual = 0.0
            s_dual = 0.0
            for i in range(n):
                t = fabs(tmp_n[i] + q[i] + tmp_n2[i])
                if t > r_dual:
                    r_dual = t
                if fabs(tmp_n[i]) > s_dual:
                    s_dual = fabs(tmp_n[i])
                if fabs(tmp_n2[i]) > s_dual:
                    s_dual = fabs(tmp_n2[i])
                if fabs(q[i]) > s_dual:
                    s_dual = fabs(q[i])
            if r_prim <= eps_abs + eps_rel * s_prim and r_dual <= eps_abs + eps_rel * s_dual:
                status = SOLVED
                iters = it
                break

            ndy = _amax(dy, m)
            if ndy > 0.0:
                _matvec_t(A, dy, tmp_n, m, n)
                if _amax(tmp_n, n) <= eps_pinf * ndy:
                    ok = True
                    support = 0.0
                    for i in range(m):
                        if dy[i] > 0.0:
                            if isinf(u[i]):
                                ok = False
                                break
                            support += u[i] * dy[i]
                        elif dy[i] < 0.0:
                            if isinf(l[i]):
                                ok = False
                                break
                            support += l[i] * dy[i]
                    if ok and support < -eps_pinf * ndy:
                        status = INFEASIBLE
                        iters = it
                        break

            scale = 1.0
            t = _amax(x, n)
            if t > scale:
                scale = t
            t = _amax(z, m)
            if t > scale:
                scale = t
            if (dx if dx > dz else dz) < 1e-12 * scale and r_prim > 1e3 * eps_abs:
                stall += check_every
                if stall >= 100:
                    status = STALLED
                    iters = it
                    break
            else:
                stall = 0
    return status, iters
