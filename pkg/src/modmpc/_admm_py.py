"""Pure-numpy ADMM iteration loop (fallback for the compiled kernel).

Signature and status codes mirror ``modmpc._admm_kernel.admm_loop``.
"""

import numpy as np

SOLVED = 0
MAX_ITER = 1
INFEASIBLE = 2
STALLED = 3


def admm_loop(Kinv, A, P, q, l, u, rho, sigma, alpha, eps_abs, eps_rel,
              eps_pinf, max_iter, check_every, x, z, y):
    """Run OSQP-style ADMM iterations in place on ``x, z, y``.

    Returns ``(status, iterations)``. ``STALLED`` means the iterates stopped
    moving for 100 iterations while the primal residual stayed large; the
    caller decides whether that is infeasibility or slow dual growth.
    """
    At = A.T
    rho_inv = 1.0 / rho
    stall = 0
    for it in range(1, max_iter + 1):
        rhs = sigma * x - q + At @ (rho * z - y)
        xt = Kinv @ rhs
        zt = A @ xt
        x_new = alpha * xt + (1.0 - alpha) * x
        zr = alpha * zt + (1.0 - alpha) * z
        z_new = np.minimum(np.maximum(zr + rho_inv * y, l), u)
        y_new = y + rho * (zr - z_new)

        dx = np.max(np.abs(x_new - x)) if x.size else 0.0
        dz = np.max(np.abs(z_new - z)) if z.size else 0.0
        dy = y_new - y
        x[:] = x_new
        z[:] = z_new
        y[:] = y_new

        if it % check_every:
            continue
        Ax = A @ x
        Px = P @ x
        Aty = At @ y
        r_prim = np.max(np.abs(Ax - z)) if z.size else 0.0
        r_dual = np.max(np.abs(Px + q + Aty)) if x.size else 0.0
        s_prim = max(np.max(np.abs(Ax)) if z.size else 0.0,
                     np.max(np.abs(z)) if z.size else 0.0)
        s_dual = max(np.max(np.abs(Px)), np.max(np.abs(Aty)), np.max(np.abs(q))) if x.size else 0.0
        if r_prim <= eps_abs + eps_rel * s_prim and r_dual <= eps_abs + eps_rel * s_dual:
            return SOLVED, it

        # primal infeasibility certificate on the dual increment
        ndy = np.max(np.abs(dy)) if dy.size else 0.0
        if ndy > 0.0 and np.max(np.abs(At @ dy)) <= eps_pinf * ndy:
            pos = dy > 0.0
            neg = dy < 0.0
            if not (np.any(np.isinf(u[pos])) or np.any(np.isinf(l[neg]))):
                support = np.dot(u[pos], dy[pos]) + np.dot(l[neg], dy[neg])
                if support < -eps_pinf * ndy:
                    return INFEASIBLE, it

        # stalled iterates with a large primal residual
        scale = max(1.0, np.max(np.abs(x)) if x.size else 0.0, np.max(np.abs(z)) if z.size else 0.0)
        if max(dx, dz) < 1e-12 * scale and r_prim > 1e3 * eps_abs:
            stall += check_every
            if stall >= 100:
                return STALLED, it
        else:
            stall = 0
    return MAX_ITER, max_iter
