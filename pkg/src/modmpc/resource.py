"""Solve-time upper bound ``gamma(N)`` and the resource number ``eta = gamma/h``.

``gamma`` is a polynomial in the number of prediction steps with
non-negative coefficients, fitted to the per-N maxima of measured QP solve
times (it is an upper bound, so maxima rather than means).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from modmpc.mpc import MpcController, OcpSpec

# coefficients reported for the reference embedded target (seconds, seconds/step)
REFERENCE_COEFFICIENTS = (3.5e-3, 1.3e-4)

WARMUP = 2


@dataclass(frozen=True)
class ResourceModel:
    coefficients: tuple

    def __init__(self, coefficients: Sequence[float]):
        a = tuple(float(c) for c in coefficients)
        if len(a) < 2:
            raise ValueError("need at least a_0 and a_1 (degree >= 1)")
        if not all(np.isfinite(c) and c >= 0 for c in a):
            raise ValueError(f"coefficients must be finite and non-negative, got {a}")
        object.__setattr__(self, "coefficients", a)

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def gamma(self, N) -> float:
        if N < 1:
            raise ValueError(f"N must be >= 1, got {N}")
        acc = 0.0
        for c in reversed(self.coefficients):
            acc = acc * N + c
        return acc

    def eta(self, h: float, N) -> float:
        if not h > 0:
            raise ValueError(f"h must be positive, got {h}")
        return self.gamma(N) / h

    def scaled(self, a: float) -> ResourceModel:
        """Model for a target ``a`` times slower than the calibration host."""
        if not a > 0:
            raise ValueError("scale must be positive")
        return ResourceModel([a * c for c in self.coefficients])

    def to_json(self, host_note: str = "") -> dict:
        return {"degree": self.degree, "coefficients": list(self.coefficients), "host_note": host_note}

    @classmethod
    def from_json(cls, d: dict) -> ResourceModel:
        m = cls(d["coefficients"])
        if "degree" in d and int(d["degree"]) != m.degree:
            raise ValueError("degree does not match the number of coefficients")
        return m

    def save(self, path, host_note: str = "") -> None:
        Path(path).write_text(json.dumps(self.to_json(host_note), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> ResourceModel:
        return cls.from_json(json.loads(Path(path).read_text()))


def gamma(m: ResourceModel, N) -> float:
    return m.gamma(N)


def eta(m: ResourceModel, h: float, N) -> float:
    return m.eta(h, N)


@dataclass(frozen=True)
class TimingSample:
    N: int
    times: tuple
    h: float

    def __post_init__(self):
        t = tuple(float(v) for v in self.times)
        if not t:
            raise ValueError("times must be non-empty")
        if not all(v > 0 for v in t):
            raise ValueError("times must be positive")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "N", int(self.N))

    @property
    def max(self) -> float:
        return max(self.times)

    @property
    def mean(self) -> float:
        return float(np.mean(self.times))


def calibrate(samples: Iterable[TimingSample], degree: int = 1) -> ResourceModel:
    """Least-squares polynomial fit to per-N maximum times, clamped at zero.

    Coefficients that come out negative are pinned to zero and the rest are
    refitted, so the result is the non-negative LS fit for small degrees.
    """
    if degree < 1:
        raise ValueError("degree must be >= 1")
    worst: dict[int, float] = {}
    for s in samples:
        worst[s.N] = max(worst.get(s.N, 0.0), s.max)
    if len(worst) < degree + 1:
        raise ValueError(f"need at least {degree + 1} distinct N values, got {len(worst)}")
    Ns = np.array(sorted(worst), dtype=float)
    t = np.array([worst[int(n)] for n in Ns])
    V = np.vander(Ns, degree + 1, increasing=True)
    free = np.ones(degree + 1, dtype=bool)
    a = np.zeros(degree + 1)
    while True:
        sub = V[:, free]
        if np.linalg.matrix_rank(sub) < sub.shape[1]:
            raise ValueError("rank-deficient timing data")
        a[:] = 0.0
        a[free] = np.linalg.lstsq(sub, t, rcond=None)[0]
        neg = free & (a < 0)
        if not neg.any():
            break
        free &= ~neg
        if not free.any():
            break
    return ResourceModel(np.maximum(a, 0.0))


def measure(spec_family: Callable[[int], OcpSpec], N_range: Iterable[int], reps: int,
            x0s: Sequence, clock: Callable[[], float] = time.perf_counter) -> list[TimingSample]:
    """Time MPC QP solves, *reps* per N, over the representative states *x0s*.

    Runs strictly sequentially; the first ``WARMUP`` solves per N are
    discarded.
    """
    if reps < 3:
        raise ValueError("reps must be >= 3")
    x0s = [np.asarray(x, dtype=float) for x in x0s]
    if not x0s:
        raise ValueError("need at least one representative x0")
    out = []
    for N in N_range:
        spec = spec_family(int(N))
        ctrl = MpcController(spec)
        for k in range(WARMUP):
            ctrl.solve(x0s[k % len(x0s)])
        times = []
        for k in range(reps):
            x0 = x0s[k % len(x0s)]
            t0 = clock()
            ctrl.solve(x0)
            times.append(max(clock() - t0, 1e-9))
        out.append(TimingSample(int(N), tuple(times), spec.h))
    return out


def raw_eta(samples: Iterable[TimingSample], h: float, N: int) -> float:
    """``eta`` from the measured worst case at *N* rather than from the fit."""
    if not h > 0:
        raise ValueError("h must be positive")
    worst = [s.max for s in samples if s.N == N]
    if not worst:
        raise KeyError(f"no timing sample for N={N}")
    return max(worst) / h
