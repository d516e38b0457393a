"""Small dense complex linear algebra used throughout the package.

Operators, kets and density matrices are plain ``complex128`` numpy arrays.
The helpers here add the shape checks, phase conventions and tolerances the
rest of the package relies on; the heavy lifting is done by LAPACK through
:mod:`numpy.linalg`.
"""

from __future__ import annotations

import numpy as np

HERMITIAN_TOL = 1e-9
NULLSPACE_TOL = 1e-9

ComplexMatrix = np.ndarray
Ket = np.ndarray


def as_matrix(entries, rows: int | None = None, cols: int | None = None) -> ComplexMatrix:
    """Return a read-only complex matrix built from `entries`.

    A flat sequence is reshaped row-major to ``(rows, cols)``; its length must
    equal ``rows * cols``.
    """
    arr = np.array(entries, dtype=np.complex128)
    if rows is not None or cols is not None:
        if rows is None or cols is None:
            raise ValueError("both rows and cols are required to reshape")
        if arr.size != rows * cols:
            raise ValueError(f"{arr.size} entries cannot fill a {rows}x{cols} matrix")
        arr = arr.reshape(rows, cols)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def adjoint(m: ComplexMatrix) -> ComplexMatrix:
    return m.conj().T


def matmul(a: ComplexMatrix, b: ComplexMatrix) -> ComplexMatrix:
    """Dense product ``a @ b`` with an explicit shape check."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise ValueError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def norm(v: Ket) -> float:
    return float(np.linalg.norm(v))


def normalize(v: Ket) -> Ket:
    n = norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return np.asarray(v, dtype=np.complex128) / n


def ket(dim: int, index: int) -> Ket:
    v = np.zeros(dim, dtype=np.complex128)
    v[index] = 1.0
    return v


def projector(*kets: Ket) -> ComplexMatrix:
    """Sum of ``|v><v|`` over the given kets (assumed orthonormal)."""
    dim = len(kets[0])
    p = np.zeros((dim, dim), dtype=np.complex128)
    for v in kets:
        p += np.outer(v, v.conj())
    return p


def hermiticity_defect(h: ComplexMatrix) -> float:
    h = np.asarray(h)
    if h.size == 0:
        return 0.0
    return float(np.max(np.abs(h - h.conj().T)))


def _fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its first non-negligible component is real positive."""
    out = vectors.copy()
    for k in range(out.shape[1]):
        col = out[:, k]
        idx = np.flatnonzero(np.abs(col) > 1e-12)
        if idx.size:
            lead = col[idx[0]]
            out[:, k] = col * (abs(lead) / lead)
    return out


def hermitian_eigen(h: ComplexMatrix, tol: float = HERMITIAN_TOL) -> tuple[np.ndarray, ComplexMatrix]:
    """Eigen-decomposition of a Hermitian matrix.

    Parameters
    ----------
    h : ComplexMatrix
        Square matrix with ``max|h - h^dagger| <= tol``.
    tol : float
        Allowed Hermiticity defect.

    Returns
    -------
    eigenvalues : ndarray
        Real eigenvalues in ascending order.
    eigenvectors : ComplexMatrix
        Orthonormal eigenvectors as columns, each with its first non-zero
        component made real and positive so repeated calls agree.
    """
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"hermitian_eigen needs a square matrix, got shape {h.shape}")
    defect = hermiticity_defect(h)
    if defect > tol:
        raise ValueError(f"matrix is not Hermitian: max|H - H^dagger| = {defect:.3e} > tol {tol:.1e}")
    vals, vecs = np.linalg.eigh(0.5 * (h + h.conj().T))
    return vals, _fix_phases(vecs)


def nullspace(m: ComplexMatrix, sv_tol: float = NULLSPACE_TOL) -> list[Ket]:
    """Orthonormal basis of the right null space of `m`.

    Singular vectors with ``sigma < sv_tol * sigma_max`` are kept. A zero
    matrix has the whole space as kernel; a full-rank matrix gives ``[]``.
    """
    if sv_tol <= 0:
        raise ValueError("sv_tol must be positive")
    m = np.asarray(m, dtype=np.complex128)
    n = m.shape[1]
    if m.shape[0] == 0:
        return [ket(n, k) for k in range(n)]
    _, s, vh = np.linalg.svd(m, full_matrices=True)
    sigma = np.zeros(n)
    sigma[: s.size] = s
    smax = sigma.max()
    if smax == 0.0:
        return [ket(n, k) for k in range(n)]
    null_rows = vh[sigma < sv_tol * smax]
    basis = _fix_phases(null_rows.conj().T)
    return [basis[:, k].copy() for k in range(basis.shape[1])]


def trace_distance(rho: ComplexMatrix, sigma: ComplexMatrix) -> float:
    """Half the trace norm of ``rho - sigma``."""
    diff = np.asarray(rho) - np.asarray(sigma)
    diff = 0.5 * (diff + diff.conj().T)
    if not np.all(np.isfinite(diff)):
        return float("nan")
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def expm_hermitian(h: ComplexMatrix, scale: complex) -> ComplexMatrix:
    """``exp(scale * h)`` for Hermitian `h`, via its spectral decomposition."""
    vals, vecs = hermitian_eigen(h, tol=max(HERMITIAN_TOL, 1e-6 * (1.0 + float(np.max(np.abs(h))))))
    return (vecs * np.exp(scale * vals)) @ vecs.conj().T
