"""Time the compiled and numpy Lindblad integrators on the same schedule.

    python3 benchmarks/bench_kernels.py --steps 20000 --repeat 3
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from darkloop import kernels
from darkloop.dynamics import Schedule, _jump_pairs, density
from darkloop.model import build_model


def bench(backend: str, steps: int, dt: float, repeat: int) -> tuple[float, np.ndarray]:
    model = build_model()
    psi = 0.5 * (model.e(1) + model.e(2) + model.e(3) + model.e(10))
    sched = Schedule.phase_sweep(0.5, 2 * np.pi, steps * dt)
    rho0 = density(psi)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        snaps, bad = kernels.integrate(rho0, sched.table(), _jump_pairs(model, "collective"), 1.0, dt, steps,
                                       np.array([steps]), backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, snaps[-1]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=20000)
    ap.add_argument("--dt", type=float, default=0.01)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    results = {}
    for backend in kernels.available_backends():
        t, rho = bench(backend, args.steps, args.dt, args.repeat)
        results[backend] = (t, rho)
        print(f"{backend:>9}: {t:8.3f} s  {1e6 * t / args.steps:8.2f} us/step")
    if len(results) == 2:
        (tc, rc), (tp, rp) = results["compiled"], results["python"]
        print(f"  speedup: {tp / tc:.1f}x   max |rho_c - rho_py| = {np.max(np.abs(rc - rp)):.2e}")


if __name__ == "__main__":
    main()
