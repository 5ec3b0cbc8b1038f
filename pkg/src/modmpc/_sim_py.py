"""Pure-Python RK4 integration of one sampling interval (fallback path).

Works for any vector field ``f(x, u)``; the compiled twin in
``modmpc._sim_kernel`` only knows the builtin vector fields.
"""

import numpy as np

from modmpc.numkernel import rk4_step


def integrate_interval(f, s, u, dt, substeps, Q, R, blowup, xs_out, v_out):
    """Advance the augmented state ``s = (x, J)`` over *substeps* RK4 steps.

    ``J`` accumulates ``x'Qx + u'Ru``. States and running costs after each
    substep are written to ``xs_out`` and ``v_out``. Returns
    ``(completed_substeps, diverged)``; ``s`` is updated in place.
    """
    n_x = s.size - 1
    ru = float(u @ R @ u)

    def F(sa, uu):
        x = sa[:n_x]
        out = np.empty(n_x + 1)
        out[:n_x] = f(x, uu)
        out[n_x] = x @ Q @ x + ru
        return out

    for j in range(substeps):
        s_new = rk4_step(F, s, u, dt)
        x = s_new[:n_x]
        if not np.all(np.isfinite(s_new)) or np.max(np.abs(x)) > blowup:
            s[:] = s_new
            return j, True
        s[:] = s_new
        xs_out[j] = x
        v_out[j] = x @ Q @ x + ru
    return substeps, False
