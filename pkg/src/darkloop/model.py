"""Collective two-pair atomic model and its squeezed-reservoir dark states.

Each cavity holds a pair of atoms described by four collective states,
indexed ``a -> 0, -1 -> 1, 0 -> 2, 1 -> 3``.  The two-pair product state
``(p1, p2)`` lives at index ``4 * idx(p1) + idx(p2)`` of the 16-dim space.

The qubit of pair ``n`` is encoded in ``{|a>_n, |-1>_n}``; the computational
states are ``e1 = |a,a>``, ``e2 = |a,-1>``, ``e3 = |-1,a>`` and
``e10 = |-1,-1>``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from darkloop.linalg import ComplexMatrix, Ket, normalize

DIM = 16
N_E = 12
# frame indices of the four dark states inside the 12-dim e-span
DFS_SLOTS = (0, 1, 2, 3)
# e-basis labels (1-based) of the computational states
COMPUTATIONAL_LABELS = (1, 2, 3, 10)
# Candidate order used to complete the dark states to an orthonormal frame.
# With this order no candidate ever becomes (near) dependent, so the completed
# frame is smooth in (r, phi) and equals a permutation of the e-basis at r = 0.
COMPLETION_ORDER = (4, 5, 6, 7, 8, 9, 11, 12, 1, 2, 3, 10)
_GS_TOL = 1e-6


class PairState(enum.IntEnum):
    A = 0  # singlet |a>
    M_MINUS = 1  # |-1> = |g g>
    M_ZERO = 2  # |0>
    M_PLUS = 3  # |1> = |e e>


def pair_index(p1: PairState | int, p2: PairState | int) -> int:
    return 4 * int(p1) + int(p2)


def product_ket(p1: PairState | int, p2: PairState | int) -> Ket:
    v = np.zeros(DIM, dtype=np.complex128)
    v[pair_index(p1, p2)] = 1.0
    return v


@dataclass(frozen=True)
class ReservoirParams:
    """Squeeze parameter `r`, squeeze phase `phi` (unwrapped) and rate `Gamma`."""

    r: float
    phi: float
    Gamma: float = 1.0

    def __post_init__(self):
        if self.r < 0:
            raise ValueError(f"squeeze parameter r must be >= 0, got {self.r}")
        if not self.Gamma > 0:
            raise ValueError(f"Gamma must be > 0, got {self.Gamma}")

    @classmethod
    def from_couplings(cls, beta_r: float, beta_s: float, kappa: float, phi: float = 0.0) -> ReservoirParams:
        """Effective reservoir from Raman couplings and the cavity decay rate."""
        if not beta_r > abs(beta_s):
            raise ValueError("need beta_r > |beta_s| for a physical squeezed reservoir")
        if not kappa > 0:
            raise ValueError("kappa must be > 0")
        d = beta_r**2 - beta_s**2
        return cls(r=math.acosh(beta_r / math.sqrt(d)), phi=phi, Gamma=2.0 * d / kappa)


@dataclass(frozen=True, eq=False)
class CollectiveModel:
    """Operators and basis states of the 16-dim two-pair space.

    Attributes
    ----------
    S_plus, S_minus : ComplexMatrix
        Collective raising/lowering operators ``S+ = S+_1 + S+_2`` and its adjoint.
    S_plus_pair, S_minus_pair : tuple of ComplexMatrix
        Per-pair operators ``S+_n`` embedded in the product space.
    e_basis : ComplexMatrix
        16x12 matrix whose columns are ``|e1> ... |e12>``.
    projector_e : ComplexMatrix
        Projector onto span{e1..e12}.
    projector_comp : ComplexMatrix
        Projector onto the computational span{e1, e2, e3, e10}.
    """

    S_plus: ComplexMatrix
    S_minus: ComplexMatrix
    S_plus_pair: tuple[ComplexMatrix, ComplexMatrix]
    S_minus_pair: tuple[ComplexMatrix, ComplexMatrix]
    e_basis: ComplexMatrix
    projector_e: ComplexMatrix
    projector_comp: ComplexMatrix
    dim: int = DIM

    def e(self, label: int) -> Ket:
        """Ket ``|e_label>`` (1-based label, as in the e-basis list)."""
        if not 1 <= label <= N_E:
            raise ValueError(f"e-basis label must be in 1..{N_E}, got {label}")
        return self.e_basis[:, label - 1].copy()

    def to_e(self, op: ComplexMatrix) -> ComplexMatrix:
        """Restrict a 16-dim operator to the 12-dim e-span."""
        return self.e_basis.conj().T @ op @ self.e_basis

    def from_e(self, v: np.ndarray) -> np.ndarray:
        """Embed e-span coordinates (ket or operator) into the 16-dim space."""
        v = np.asarray(v)
        if v.ndim == 1:
            return self.e_basis @ v
        return self.e_basis @ v @ self.e_basis.conj().T


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.complex128)
    a.setflags(write=False)
    return a


@lru_cache(maxsize=1)
def build_model() -> CollectiveModel:
    P = PairState
    s_plus_1 = np.zeros((4, 4), dtype=np.complex128)
    s_plus_1[P.M_ZERO, P.M_MINUS] = 1.0
    s_plus_1[P.M_PLUS, P.M_ZERO] = 1.0
    eye = np.eye(4, dtype=np.complex128)
    sp1 = np.kron(s_plus_1, eye)
    sp2 = np.kron(eye, s_plus_1)
    sp = sp1 + sp2

    k = product_ket
    r2, r6 = math.sqrt(2.0), math.sqrt(6.0)
    e = [
        k(P.A, P.A),
        k(P.A, P.M_MINUS),
        k(P.M_MINUS, P.A),
        k(P.A, P.M_ZERO),
        k(P.M_ZERO, P.A),
        k(P.A, P.M_PLUS),
        k(P.M_PLUS, P.A),
        k(P.M_PLUS, P.M_PLUS),
        (k(P.M_PLUS, P.M_ZERO) + k(P.M_ZERO, P.M_PLUS)) / r2,
        k(P.M_MINUS, P.M_MINUS),
        (k(P.M_ZERO, P.M_MINUS) + k(P.M_MINUS, P.M_ZERO)) / r2,
        (k(P.M_PLUS, P.M_MINUS) + k(P.M_MINUS, P.M_PLUS) + 2.0 * k(P.M_ZERO, P.M_ZERO)) / r6,
    ]
    e_basis = np.column_stack(e)
    comp = e_basis[:, [c - 1 for c in COMPUTATIONAL_LABELS]]
    return CollectiveModel(
        S_plus=_frozen(sp),
        S_minus=_frozen(sp.conj().T),
        S_plus_pair=(_frozen(sp1), _frozen(sp2)),
        S_minus_pair=(_frozen(sp1.conj().T), _frozen(sp2.conj().T)),
        e_basis=_frozen(e_basis),
        projector_e=_frozen(e_basis @ e_basis.conj().T),
        projector_comp=_frozen(comp @ comp.conj().T),
    )


def jump_operator(model: CollectiveModel, r: float, phi: float) -> ComplexMatrix:
    """Collective jump operator ``R = S cosh r + exp(i phi) S+ sinh r``."""
    return model.S_minus * math.cosh(r) + np.exp(1j * phi) * math.sinh(r) * model.S_plus


def pair_jump_operators(model: CollectiveModel, r: float, phi: float) -> tuple[ComplexMatrix, ComplexMatrix]:
    """Jump operators of two pairs coupled to independent reservoirs."""
    c, s = math.cosh(r), np.exp(1j * phi) * math.sinh(r)
    return tuple(sm * c + s * sp for sm, sp in zip(model.S_minus_pair, model.S_plus_pair))


def _dfs_coefficients(j: int, r: float, phi: float) -> dict[int, complex]:
    """Dark-state amplitudes on the e-basis, keyed by 1-based label."""
    if j == 1:
        return {1: 1.0}
    if j in (2, 3):
        n = math.sqrt(math.cosh(2.0 * r))
        return {j: math.cosh(r) / n, j + 4: -np.exp(1j * phi) * math.sinh(r) / n}
    if j == 4:
        t = math.tanh(r)
        n = math.sqrt(t**4 + 2.0 / 3.0 * t**2 + 1.0)
        return {
            8: np.exp(2j * phi) * t**2 / n,
            12: -math.sqrt(2.0 / 3.0) * np.exp(1j * phi) * t / n,
            10: 1.0 / n,
        }
    raise ValueError(f"dark-state index j must be in 1..4, got {j}")


def _dfs_derivatives(j: int, r: float, phi: float) -> tuple[dict[int, complex], dict[int, complex]]:
    """Analytic d/dr and d/dphi of the dark-state amplitudes."""
    if j == 1:
        return {}, {}
    if j in (2, 3):
        ch, sh = math.cosh(r), math.sinh(r)
        c2 = math.cosh(2.0 * r)
        n = math.sqrt(c2)
        dn = math.sinh(2.0 * r) / n  # d/dr sqrt(cosh 2r)
        ph = np.exp(1j * phi)
        d_r = {j: (sh * n - ch * dn) / c2, j + 4: -ph * (ch * n - sh * dn) / c2}
        d_phi = {j: 0.0, j + 4: -1j * ph * sh / n}
        return d_r, d_phi
    if j == 4:
        t = math.tanh(r)
        dt = 1.0 - t**2
        q = t**4 + 2.0 / 3.0 * t**2 + 1.0
        n = math.sqrt(q)
        dn = (4.0 * t**3 + 4.0 / 3.0 * t) * dt / (2.0 * n)
        k = math.sqrt(2.0 / 3.0)
        p1, p2 = np.exp(1j * phi), np.exp(2j * phi)

        def d(f, df):
            return (df * n - f * dn) / q

        d_r = {8: p2 * d(t**2, 2.0 * t * dt), 12: -k * p1 * d(t, dt), 10: d(1.0, 0.0)}
        d_phi = {8: 2j * p2 * t**2 / n, 12: -1j * k * p1 * t / n, 10: 0.0}
        return d_r, d_phi
    raise ValueError(f"dark-state index j must be in 1..4, got {j}")


def _dense(coeffs: dict[int, complex]) -> np.ndarray:
    v = np.zeros(N_E, dtype=np.complex128)
    for label, c in coeffs.items():
        v[label - 1] = c
    return v


def dfs_coefficients(j: int, r: float, phi: float) -> np.ndarray:
    """Dark state ``j`` as a 12-vector of e-basis amplitudes."""
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    return _dense(_dfs_coefficients(j, r, phi))


def dfs_state(model: CollectiveModel, j: int, r: float, phi: float) -> Ket:
    """Normalized dark state ``j`` (1..4) of ``R(r, phi)`` in the 16-dim space."""
    return model.e_basis @ dfs_coefficients(j, r, phi)


def nu1(r0: float) -> float:
    s2, c2 = math.sinh(r0) ** 2, math.cosh(r0) ** 2
    return s2 / (s2 + c2)


def nu12(r0: float) -> float:
    t2 = math.tanh(r0) ** 2
    return (2.0 * t2**2 + 2.0 / 3.0 * t2) / (t2**2 + 2.0 / 3.0 * t2 + 1.0)


def cz_point() -> float:
    """Squeeze parameter at which ``nu12 == nu1`` (Controlled-Z without local corrections)."""
    return math.atanh(math.sqrt(math.sqrt(4.0 / 3.0) - 1.0))


def gate_phase_rate(r0: float) -> float:
    """``2 nu1 - nu12``: CPHASE angle accumulated per radian of loop phase."""
    return 2.0 * nu1(r0) - nu12(r0)


def _complete_frame(rows: np.ndarray) -> np.ndarray:
    basis = [row for row in rows]
    for label in COMPLETION_ORDER:
        if len(basis) == N_E:
            break
        cand = np.zeros(N_E, dtype=np.complex128)
        cand[label - 1] = 1.0
        for _ in range(2):
            for b in basis:
                cand = cand - np.vdot(b, cand) * b
        nrm = np.linalg.norm(cand)
        if nrm > _GS_TOL:
            basis.append(cand / nrm)
    if len(basis) != N_E:
        raise RuntimeError("Gram-Schmidt completion of the dark-state frame failed")
    return np.array(basis)


def frame_unitary(model: CollectiveModel | None, r: float, phi: float) -> ComplexMatrix:
    """12x12 unitary ``O`` whose row ``i`` holds the e-basis amplitudes of frame state ``i``.

    Rows 0-3 are the four dark states; rows 4-11 complete them to an
    orthonormal basis by Gram-Schmidt over the e-basis in `COMPLETION_ORDER`.
    """
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    dfs = np.array([dfs_coefficients(j, r, phi) for j in range(1, 5)])
    return _complete_frame(dfs)


def _frame_completion(r: float, phi: float) -> np.ndarray:
    dfs = np.array([_dense(_dfs_coefficients(j, r, phi)) for j in range(1, 5)])
    return _complete_frame(dfs)[4:]


def frame_derivatives(r: float, phi: float, h: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """``dO/dr`` and ``dO/dphi``: analytic for dark-state rows, central differences otherwise."""
    d_r = np.zeros((N_E, N_E), dtype=np.complex128)
    d_phi = np.zeros((N_E, N_E), dtype=np.complex128)
    for j in range(1, 5):
        dr, dp = _dfs_derivatives(j, r, phi)
        d_r[j - 1] = _dense(dr)
        d_phi[j - 1] = _dense(dp)
    # the completion is smooth through r = 0 (formulas are analytic in r)
    d_r[4:] = (_frame_completion(r + h, phi) - _frame_completion(r - h, phi)) / (2.0 * h)
    d_phi[4:] = (_frame_completion(r, phi + h) - _frame_completion(r, phi - h)) / (2.0 * h)
    return d_r, d_phi


def gauge_generator(model: CollectiveModel | None, r: float, phi: float, rdot: float, phidot: float) -> ComplexMatrix:
    """Adiabatic-frame generator ``G = i V^dagger dV/dt`` with ``V = O^T``.

    ``G[j, k] = i <phi_j | d/dt phi_k>`` in the frame basis; the dark-state
    block is ``G[:4, :4]`` and the frame state equation is ``dv/dt = i G v``.
    """
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    if rdot == 0.0 and phidot == 0.0:
        return np.zeros((N_E, N_E), dtype=np.complex128)
    o = frame_unitary(model, r, phi)
    d_r, d_phi = frame_derivatives(r, phi)
    v = o.T
    v_dot = (rdot * d_r + phidot * d_phi).T
    return 1j * v.conj().T @ v_dot


def berry_connection_phi(model: CollectiveModel | None, j: int, r: float, h: float | None = None) -> float:
    """Phase-direction connection ``A_j(r) = Im <psi_j | d_phi psi_j>``.

    With this sign the loop phase of dark state ``j`` after sweeping the
    squeeze phase by ``phi0`` is ``-A_j * phi0``; ``A_2 = A_3 = nu1`` and
    ``A_4 = nu12``.  Passing `h` switches to a central finite difference in
    ``phi`` instead of the analytic derivative.
    """
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    psi = _dense(_dfs_coefficients(j, r, 0.0))
    if h is None:
        d_psi = _dense(_dfs_derivatives(j, r, 0.0)[1])
    else:
        d_psi = (_dense(_dfs_coefficients(j, r, h)) - _dense(_dfs_coefficients(j, r, -h))) / (2.0 * h)
    return float(np.vdot(psi, d_psi).imag)


def computational_state(model: CollectiveModel, amplitudes) -> Ket:
    """Ket ``sum_k c_k |e_k>`` over the computational labels (1, 2, 3, 10)."""
    amps = np.asarray(amplitudes, dtype=np.complex128)
    if amps.shape != (4,):
        raise ValueError("need four amplitudes for e1, e2, e3, e10")
    v = sum(a * model.e(label) for a, label in zip(amps, COMPUTATIONAL_LABELS))
    return normalize(v)


def dfs_block(r: float, phi: float, rdot: float, phidot: float) -> np.ndarray:
    """Dark-state block ``G[:4, :4]`` of :func:`gauge_generator` from the analytic rows only."""
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    d = np.array([dfs_coefficients(j, r, phi) for j in range(1, 5)])
    d_dot = np.zeros_like(d)
    for j in range(1, 5):
        dr, dp = _dfs_derivatives(j, r, phi)
        d_dot[j - 1] = rdot * _dense(dr) + phidot * _dense(dp)
    return 1j * d.conj() @ d_dot.T
