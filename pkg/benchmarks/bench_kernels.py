"""Compare the compiled kernels with the pure-Python fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Times one MPC QP solve (ADMM loop) and one closed-loop simulation
(RK4 interval integration) with each backend.
"""

import argparse
import timeit

import numpy as np

from modmpc import _admm_py, cloop, plants, qp
from modmpc.mpc import OcpSpec, build_qp


def mpc_qp(N):
    spec = OcpSpec(A=[[0, 1], [0, 0]], B=[[0], [1]], Q=np.eye(2), R=[[1.0]],
                   x_lb=-5, x_ub=5, u_lb=-0.3, u_ub=0.3, h=0.1, N=N)
    return build_qp(spec, [1.0, 0.5])


def bench_admm(N, repeat):
    problem = mpc_qp(N)
    out = {}
    compiled = qp._admm_loop
    for name, loop in (("compiled", compiled), ("python", _admm_py.admm_loop)):
        if name == "compiled" and qp.KERNEL != "compiled":
            continue
        qp._admm_loop = loop
        try:
            out[name] = min(timeit.repeat(lambda: qp.solve_qp(problem), number=1, repeat=repeat))
        finally:
            qp._admm_loop = compiled
    return out


def bench_sim(h, N, repeat):
    plant = plants.builtin("double_integrator")
    spec = OcpSpec(A=plant.A, B=plant.B, Q=np.eye(2), R=[[1.0]],
                   x_lb=-5, x_ub=5, u_lb=-2, u_ub=2, h=h, N=N)
    cfg = cloop.SimConfig(t_max=10.0, substeps=10)
    out = {}
    for name, flag in (("compiled", True), ("python", False)):
        if flag and cloop.INTEGRATOR != "compiled":
            continue
        fn = lambda: cloop.simulate(plant, spec, [1.0, 0.0], cfg, compiled=flag)  # noqa: E731
        out[name] = min(timeit.repeat(fn, number=1, repeat=repeat))
    return out


def report(label, times):
    parts = [f"{k}={v * 1e3:8.2f} ms" for k, v in times.items()]
    if len(times) == 2:
        parts.append(f"speed-up x{times['python'] / times['compiled']:.1f}")
    print(f"{label:<28} " + "  ".join(parts))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    print(f"ADMM backend: {qp.KERNEL}, integrator backend: {cloop.INTEGRATOR}")
    for N in (5, 20, 50):
        report(f"QP solve N={N}", bench_admm(N, args.repeat))
    for h, N in ((0.1, 5), (0.05, 10)):
        report(f"closed loop h={h} N={N}", bench_sim(h, N, args.repeat))


if __name__ == "__main__":
    main()
