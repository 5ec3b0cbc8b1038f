# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled RK4 integration of one sampling interval for known vector fields.

Same contract as ``modmpc._sim_py.integrate_interval``.
"""

from libc.math cimport sin, fabs, isfinite

cdef enum:
    RHS_LINEAR = 0
    RHS_DOUBLE_INTEGRATOR = 1
    RHS_PENDULUM = 2
    MAXN = 32


cdef void _rhs(int rhs_id, double[::1] params, double* x, double* u,
               Py_ssize_t nx, Py_ssize_t nu, double[::1] e_s, double[::1] u_s,
               double* out) nogil:
    cdef double xs[MAXN]
    cdef double us[MAXN]
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(nx):
        xs[i] = x[i] + e_s[i]
    for i in range(nu):
        us[i] = u[i] + u_s[i]
    if rhs_id == RHS_DOUBLE_INTEGRATOR:
        out[0] = xs[1]
        out[1] = us[0]
    elif rhs_id == RHS_PENDULUM:
        out[0] = xs[1]
        out[1] = params[0] * sin(xs[0]) - params[1] * xs[1] + us[0]
    else:
        # params = A (row-major, nx*nx) followed by B (row-major, nx*nu)
        for i in range(nx):
            acc = 0.0
            for j in range(nx):
                acc += params[i * nx + j] * xs[j]
            for j in range(nu):
                acc += params[nx * nx + i * nu + j] * us[j]
            out[i] = acc


cdef double _cost(double* x, double* u, double[:, ::1] Q, double[:, ::1] R,
                  Py_ssize_t nx, Py_ssize_t nu) nogil:
    cdef double c = 0.0
    cdef Py_ssize_t i, j
    for i in range(nx):
        for j in range(nx):
            c += x[i] * Q[i, j] * x[j]
    for i in range(nu):
        for j in range(nu):
            c += u[i] * R[i, j] * u[j]
    return c


def integrate_interval(int rhs_id, double[::1] params, double[::1] e_s, double[::1] u_s,
                       double[::1] s, double[::1] u, double dt, int substeps,
                       double[:, ::1] Q, double[:, ::1] R, double blowup,
                       double[:, ::1] xs_out, double[::1] v_out):
    cdef Py_ssize_t nx = s.shape[0] - 1
    cdef Py_ssize_t nu = u.shape[0]
    cdef Py_ssize_t i
    cdef int j
    cdef int done = 0
    cdef bint diverged = False
    cdef double k1[MAXN]
    cdef double k2[MAXN]
    cdef double k3[MAXN]
    cdef double k4[MAXN]
    cdef double tmp[MAXN]
    cdef double c1, c2, c3, c4, m
    cdef double udummy = 0.0
    cdef double* up = &udummy
    if nx > MAXN or nu > MAXN:
        raise ValueError("state/input dimension too large for the compiled integrator")
    if nu > 0:
        up = &u[0]
    with nogil:
        for j in range(substeps):
            _rhs(rhs_id, params, &s[0], up, nx, nu, e_s, u_s, k1)
            c1 = _cost(&s[0], up, Q, R, nx, nu)
            for i in range(nx):
                tmp[i] = s[i] + 0.5 * dt * k1[i]
            _rhs(rhs_id, params, tmp, up, nx, nu, e_s, u_s, k2)
            c2 = _cost(tmp, up, Q, R, nx, nu)
            for i in range(nx):
                tmp[i] = s[i] + 0.5 * dt * k2[i]
            _rhs(rhs_id, params, tmp, up, nx, nu, e_s, u_s, k3)
            c3 = _cost(tmp, up, Q, R, nx, nu)
            for i in range(nx):
                tmp[i] = s[i] + dt * k3[i]
            _rhs(rhs_id, params, tmp, up, nx, nu, e_s, u_s, k4)
            c4 = _cost(tmp, up, Q, R, nx, nu)
            m = 0.0
            for i in range(nx):
                s[i] = s[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                if not isfinite(s[i]) or fabs(s[i]) > m:
                    m = fabs(s[i]) if isfinite(s[i]) else 1e308
            s[nx] = s[nx] + (dt / 6.0) * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
            if m > blowup or not isfinite(s[nx]):
                diverged = True
                break
            for i in range(nx):
                xs_out[j, i] = s[i]
            v_out[j] = _cost(&s[0], up, Q, R, nx, nu)
            done = j + 1
    return done, diverged
