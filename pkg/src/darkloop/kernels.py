"""Backend selection for the Lindblad integrator.

The compiled extension is used when importable; setting
``DARKLOOP_PURE_PYTHON=1`` forces the numpy implementation.
"""

from __future__ import annotations

import os

import numpy as np

from darkloop import _lindblad_py

if os.environ.get("DARKLOOP_PURE_PYTHON", "") not in ("", "0"):
    _compiled = None
else:
    try:
        from darkloop import _lindblad_core as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def available_backends() -> list[str]:
    return ["compiled", "python"] if _compiled is not None else ["python"]


def pack_jumps(pairs, tol: float = 0.0):
    """CSR-pack a list of ``(A_k, B_k)`` matrix pairs on their union pattern.

    Returns ``(rowptr, col, aval, bval)`` padded to the largest pattern.
    """
    n = pairs[0][0].shape[0]
    patterns = []
    for a, b in pairs:
        mask = (np.abs(a) > tol) | (np.abs(b) > tol)
        rows, cols = np.nonzero(mask)
        patterns.append((rows, cols))
    maxnnz = max(1, max(len(r) for r, _ in patterns))
    njump = len(pairs)
    rowptr = np.zeros((njump, n + 1), dtype=np.intp)
    col = np.zeros((njump, maxnnz), dtype=np.intp)
    aval = np.zeros((njump, maxnnz), dtype=np.complex128)
    bval = np.zeros((njump, maxnnz), dtype=np.complex128)
    for k, ((a, b), (rows, cols)) in enumerate(zip(pairs, patterns)):
        rowptr[k, 1:] = np.cumsum(np.bincount(rows, minlength=n))
        col[k, : len(cols)] = cols
        aval[k, : len(cols)] = a[rows, cols]
        bval[k, : len(cols)] = b[rows, cols]
    return rowptr, col, aval, bval


def integrate(rho0, segs, jumps, gamma, dt, n_steps, sample_steps, trace_tol=1e-6, backend=None):
    """Run the RK4 integrator on the selected backend.

    Parameters
    ----------
    rho0 : ndarray
        Initial density matrix.
    segs : ndarray
        Schedule table, one row ``(t_start, duration, r0, r1, phi0, phi1)`` per segment.
    jumps : list of (ndarray, ndarray)
        ``(A_k, B_k)`` with ``R_k = cosh r A_k + exp(i phi) sinh r B_k``.
    """
    backend = backend or BACKEND
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled backend not available; build the extension first")
        impl = _compiled.integrate
    elif backend == "python":
        impl = _lindblad_py.integrate
    else:
        raise ValueError(f"unknown backend {backend!r}")
    rowptr, col, aval, bval = pack_jumps(jumps)
    return impl(
        np.ascontiguousarray(rho0, dtype=np.complex128),
        np.ascontiguousarray(segs, dtype=np.float64),
        rowptr, col, aval, bval,
        float(gamma), float(dt), int(n_steps),
        np.ascontiguousarray(sample_steps, dtype=np.intp),
        float(trace_tol),
    )
