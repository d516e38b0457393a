"""Pure-numpy twin of the compiled RK4 Lindblad integrator.

Same arguments and results as ``_lindblad_core.integrate``; used when the
extension is not built or when ``DARKLOOP_PURE_PYTHON=1``.
"""

from __future__ import annotations

import math

import numpy as np


def _dense_ops(n, rowptr, col, vals):
    ops = np.zeros((col.shape[0], n, n), dtype=np.complex128)
    for k in range(col.shape[0]):
        for i in range(n):
            for p in range(rowptr[k, i], rowptr[k, i + 1]):
                ops[k, i, col[k, p]] = vals[k, p]
    return ops


def _schedule_at(t, segs):
    k = 0
    while k < len(segs) - 1 and t >= segs[k, 0] + segs[k, 1]:
        k += 1
    u = min(max((t - segs[k, 0]) / segs[k, 1], 0.0), 1.0)
    return segs[k, 2] + u * (segs[k, 3] - segs[k, 2]), segs[k, 4] + u * (segs[k, 5] - segs[k, 4])


def integrate(rho0, segs, rowptr, col, aval, bval, gamma, dt, n_steps, sample_steps, trace_tol):
    n = rho0.shape[0]
    a_ops = _dense_ops(n, rowptr, col, aval)
    b_ops = _dense_ops(n, rowptr, col, bval)
    segs = np.asarray(segs, dtype=float)

    def rhs(t, rho):
        r, phi = _schedule_at(t, segs)
        R = math.cosh(r) * a_ops + (math.sinh(r) * complex(math.cos(phi), math.sin(phi))) * b_ops
        Rd = R.conj().transpose(0, 2, 1)
        m = np.einsum("kij,kjl->il", Rd, R)
        x = m @ rho
        out = (R @ rho @ Rd).sum(axis=0) - 0.5 * (x + x.conj().T)
        return gamma * out

    samples = np.asarray(sample_steps, dtype=np.intp)
    snaps = np.zeros((len(samples), n, n), dtype=np.complex128)
    rho = np.array(rho0, dtype=np.complex128)
    next_sample = 0
    bad = -1
    h2 = 0.5 * dt
    step = 0
    while True:
        if next_sample < len(samples) and samples[next_sample] == step:
            snaps[next_sample] = rho
            next_sample += 1
        if step == n_steps:
            break
        t = step * dt
        k1 = rhs(t, rho)
        k2 = rhs(t + h2, rho + h2 * k1)
        k3 = rhs(t + h2, rho + h2 * k2)
        k4 = rhs(t + dt, rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
        step += 1
        if bad < 0 and not abs(np.trace(rho).real - 1.0) <= trace_tol:
            bad = step
    return snaps, bad
