# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled RK4 integrator for driven Lindblad dissipators.

Each jump operator has the form ``R_k(t) = cosh r(t) A_k + exp(i phi(t)) sinh r(t) B_k``
with ``(r, phi)`` piecewise linear in time.  The equation integrated is

    d rho / dt = Gamma * sum_k (R_k rho R_k^dagger - 1/2 {R_k^dagger R_k, rho}).

Jump operators are stored as padded per-jump CSR patterns; ``rho`` is dense.
"""

import numpy as np
from libc.math cimport cosh, sinh, cos, sin, fabs


cdef inline void _schedule_at(double t, const double[:, ::1] segs, double* r, double* phi) noexcept nogil:
    # segs rows: (t_start, duration, r_start, r_end, phi_start, phi_end)
    cdef Py_ssize_t k, nseg = segs.shape[0]
    cdef double u
    k = 0
    while k < nseg - 1 and t >= segs[k, 0] + segs[k, 1]:
        k += 1
    u = (t - segs[k, 0]) / segs[k, 1]
    if u < 0.0:
        u = 0.0
    elif u > 1.0:
        u = 1.0
    r[0] = segs[k, 2] + u * (segs[k, 3] - segs[k, 2])
    phi[0] = segs[k, 4] + u * (segs[k, 5] - segs[k, 4])


cdef class _Rhs:
    cdef Py_ssize_t n, njump, maxnnz
    cdef double gamma
    cdef const double[:, ::1] segs
    cdef const Py_ssize_t[:, ::1] rowptr
    cdef const Py_ssize_t[:, ::1] col
    cdef const double complex[:, ::1] aval
    cdef const double complex[:, ::1] bval
    cdef double complex[:, ::1] rval
    cdef double complex[:, ::1] m
    cdef double complex[:, ::1] x
    cdef double complex[:, ::1] y
    cdef Py_ssize_t[::1] m_row
    cdef Py_ssize_t[::1] m_col
    cdef double complex[::1] m_val

    def __init__(self, Py_ssize_t n, double gamma, segs, rowptr, col, aval, bval):
        self.n = n
        self.gamma = gamma
        self.segs = segs
        self.rowptr = rowptr
        self.col = col
        self.aval = aval
        self.bval = bval
        self.njump = col.shape[0]
        self.maxnnz = col.shape[1]
        self.rval = np.zeros((self.njump, self.maxnnz), dtype=np.complex128)
        self.m = np.zeros((n, n), dtype=np.complex128)
        self.x = np.zeros((n, n), dtype=np.complex128)
        self.y = np.zeros((n, n), dtype=np.complex128)
        self.m_row = np.zeros(n * n, dtype=np.intp)
        self.m_col = np.zeros(n * n, dtype=np.intp)
        self.m_val = np.zeros(n * n, dtype=np.complex128)

    cdef void eval(self, double t, double complex[:, ::1] rho, double complex[:, ::1] out) noexcept nogil:
        cdef Py_ssize_t n = self.n
        cdef Py_ssize_t i, j, k, p, q, a, b, nm, pend
        cdef double r, phi, c, s
        cdef double complex ep, v, w
        _schedule_at(t, self.segs, &r, &phi)
        c = cosh(r)
        s = sinh(r)
        ep = (cos(phi) + 1j * sin(phi)) * s

        # R_k values and M = sum_k R_k^dagger R_k
        for i in range(n):
            for j in range(n):
                self.m[i, j] = 0.0
        for k in range(self.njump):
            for p in range(self.rowptr[k, n]):
                self.rval[k, p] = c * self.aval[k, p] + ep * self.bval[k, p]
            for i in range(n):
                pend = self.rowptr[k, i + 1]
                for p in range(self.rowptr[k, i], pend):
                    v = self.rval[k, p].conjugate()
                    a = self.col[k, p]
                    for q in range(self.rowptr[k, i], pend):
                        self.m[a, self.col[k, q]] += v * self.rval[k, q]
        nm = 0
        for i in range(n):
            for j in range(n):
                if self.m[i, j] != 0.0:
                    self.m_row[nm] = i
                    self.m_col[nm] = j
                    self.m_val[nm] = self.m[i, j]
                    nm += 1

        # x = M rho ; out = -1/2 (M rho + rho M), rho M = (M rho)^dagger for Hermitian rho
        for i in range(n):
            for j in range(n):
                self.x[i, j] = 0.0
        for p in range(nm):
            a = self.m_row[p]
            b = self.m_col[p]
            v = self.m_val[p]
            for j in range(n):
                self.x[a, j] += v * rho[b, j]
        for i in range(n):
            for j in range(n):
                out[i, j] = -0.5 * (self.x[i, j] + self.x[j, i].conjugate())

        # out += R rho R^dagger
        for k in range(self.njump):
            for i in range(n):
                for j in range(n):
                    self.y[i, j] = 0.0
                for p in range(self.rowptr[k, i], self.rowptr[k, i + 1]):
                    v = self.rval[k, p]
                    a = self.col[k, p]
                    for j in range(n):
                        self.y[i, j] += v * rho[a, j]
            for a in range(n):
                for p in range(self.rowptr[k, a], self.rowptr[k, a + 1]):
                    w = self.rval[k, p].conjugate()
                    b = self.col[k, p]
                    for i in range(n):
                        out[i, a] += self.y[i, b] * w

        for i in range(n):
            for j in range(n):
                out[i, j] = self.gamma * out[i, j]


def integrate(rho0, segs, rowptr, col, aval, bval, double gamma, double dt,
              Py_ssize_t n_steps, sample_steps, double trace_tol):
    """Fixed-step RK4 from ``t = 0`` over ``n_steps`` steps of size `dt`.

    Returns ``(snapshots, first_bad_step)`` where ``snapshots[i]`` is rho at
    step ``sample_steps[i]`` and ``first_bad_step`` is the first step whose
    trace deviation exceeds `trace_tol` (-1 if none).
    """
    cdef Py_ssize_t n = rho0.shape[0]
    cdef _Rhs rhs = _Rhs(n, gamma, segs, rowptr, col, aval, bval)
    cdef double complex[:, ::1] rho = np.array(rho0, dtype=np.complex128, order="C")
    cdef double complex[:, ::1] k1 = np.zeros((n, n), dtype=np.complex128)
    cdef double complex[:, ::1] k2 = np.zeros((n, n), dtype=np.complex128)
    cdef double complex[:, ::1] k3 = np.zeros((n, n), dtype=np.complex128)
    cdef double complex[:, ::1] k4 = np.zeros((n, n), dtype=np.complex128)
    cdef double complex[:, ::1] tmp = np.zeros((n, n), dtype=np.complex128)
    cdef const Py_ssize_t[::1] samples = np.ascontiguousarray(sample_steps, dtype=np.intp)
    snaps_arr = np.zeros((samples.shape[0], n, n), dtype=np.complex128)
    cdef double complex[:, :, ::1] snaps = snaps_arr
    cdef Py_ssize_t step, i, j, next_sample = 0, bad = -1
    cdef double t, h2 = 0.5 * dt, h6 = dt / 6.0
    cdef double complex z, tr

    with nogil:
        step = 0
        while True:
            if next_sample < samples.shape[0] and samples[next_sample] == step:
                for i in range(n):
                    for j in range(n):
                        snaps[next_sample, i, j] = rho[i, j]
                next_sample += 1
            if step == n_steps:
                break
            t = step * dt
            rhs.eval(t, rho, k1)
            for i in range(n):
                for j in range(n):
                    tmp[i, j] = rho[i, j] + h2 * k1[i, j]
            rhs.eval(t + h2, tmp, k2)
            for i in range(n):
                for j in range(n):
                    tmp[i, j] = rho[i, j] + h2 * k2[i, j]
            rhs.eval(t + h2, tmp, k3)
            for i in range(n):
                for j in range(n):
                    tmp[i, j] = rho[i, j] + dt * k3[i, j]
            rhs.eval(t + dt, tmp, k4)
            for i in range(n):
                for j in range(n):
                    rho[i, j] = rho[i, j] + h6 * (k1[i, j] + 2.0 * k2[i, j] + 2.0 * k3[i, j] + k4[i, j])
            # re-Hermitize
            tr = 0.0
            for i in range(n):
                rho[i, i] = rho[i, i].real
                tr = tr + rho[i, i]
                for j in range(i + 1, n):
                    z = 0.5 * (rho[i, j] + rho[j, i].conjugate())
                    rho[i, j] = z
                    rho[j, i] = z.conjugate()
            step += 1
            if bad < 0 and not (fabs(tr.real - 1.0) <= trace_tol):  # NaN counts as a violation
                bad = step
    return snaps_arr, bad
