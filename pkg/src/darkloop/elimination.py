"""Atoms plus the resonant cavity normal mode, before the mode is eliminated.

Used to check the reduced dissipative model in the bad-cavity regime: the
atomic marginal of the composite evolution should track ``Gamma D[R] rho``.
Composite ordering is ``atoms (x) mode``, index ``atom * (n_max + 1) + n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import expm_multiply

from darkloop.dynamics import Schedule, dissipator, evolve
from darkloop.linalg import trace_distance
from darkloop.model import ReservoirParams, build_model


@dataclass(frozen=True)
class PreEliminationModel:
    """Fock cutoff `n_max` and the rates ``beta_r``, ``beta_s``, ``kappa`` (same frequency unit)."""

    n_max: int
    beta_r: float
    beta_s: float
    kappa: float

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")
        if not self.beta_r > self.beta_s >= 0:
            raise ValueError("need beta_r > beta_s >= 0")
        if not self.kappa > 0:
            raise ValueError("kappa must be > 0")

    @property
    def dim(self) -> int:
        return 16 * (self.n_max + 1)

    def reservoir(self, phi: float = 0.0) -> ReservoirParams:
        return ReservoirParams.from_couplings(self.beta_r, self.beta_s, self.kappa, phi)

    @classmethod
    def for_reservoir(cls, r: float, kappa_over_beta: float = 10.0, n_max: int = 3, beta_r: float = 1.0):
        """Couplings realising squeeze parameter `r` at a given ``kappa / beta_r``."""
        return cls(n_max=n_max, beta_r=beta_r, beta_s=beta_r * math.tanh(r), kappa=kappa_over_beta * beta_r)


def annihilator(n_max: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), k=1).astype(np.complex128)


def build_pre_elimination_model(params: PreEliminationModel, phi: float) -> tuple[np.ndarray, list[np.ndarray]]:
    """Hamiltonian ``(beta_r e^{i phi} S+ + beta_s S) c + h.c.`` and jump list ``[sqrt(2 kappa) c]``."""
    model = build_model()
    c = np.kron(np.eye(16), annihilator(params.n_max))
    atom = params.beta_r * np.exp(1j * phi) * model.S_plus + params.beta_s * model.S_minus
    a = np.kron(atom, np.eye(params.n_max + 1))
    h = a @ c
    h = h + h.conj().T
    return h, [math.sqrt(2.0 * params.kappa) * c]


def atomic_marginal(rho: np.ndarray, n_max: int) -> np.ndarray:
    d = n_max + 1
    return np.einsum("anbn->ab", rho.reshape(16, d, 16, d))


def liouvillian(h: np.ndarray, jumps: list[np.ndarray]) -> sparse.csr_matrix:
    """Sparse generator acting on row-major ``rho.ravel()``: ``vec(A rho B) = (A kron B^T) vec(rho)``."""
    n = h.shape[0]
    eye = sparse.identity(n, dtype=np.complex128, format="csr")
    h_eff = sparse.csr_matrix(h - 0.5j * sum(op.conj().T @ op for op in jumps))
    gen = -1j * (sparse.kron(h_eff, eye) - sparse.kron(eye, h_eff.conj()))
    for op in jumps:
        a = sparse.csr_matrix(op)
        gen = gen + sparse.kron(a, a.conj())
    return gen.tocsr()


def evolve_composite(h: np.ndarray, jumps: list[np.ndarray], rho0: np.ndarray, T: float) -> np.ndarray:
    """``exp(L T) rho0`` for a time-independent Lindblad generator."""
    n = h.shape[0]
    rho = expm_multiply(liouvillian(h, jumps) * T, np.asarray(rho0, dtype=np.complex128).ravel())
    rho = rho.reshape(n, n)
    return 0.5 * (rho + rho.conj().T)


@dataclass
class EliminationReport:
    trace_distance: float
    cutoff_delta: float | None
    mean_photons: float
    T_over_gamma: float
    params: PreEliminationModel


def validate_elimination(
    params: PreEliminationModel,
    rho_atoms0: np.ndarray,
    phi: float = 0.0,
    T_over_gamma: float = 10.0,
    check_cutoff: bool = True,
) -> EliminationReport:
    """Compare the composite model against the reduced equation at constant ``(r, phi)``.

    The composite system starts with the mode in vacuum and is propagated
    exactly (sparse matrix exponential); the reduced side uses :func:`evolve`.
    """
    res = params.reservoir(phi)
    T = T_over_gamma / res.Gamma

    def run(p):
        h, jumps = build_pre_elimination_model(p, phi)
        vac = np.zeros((p.n_max + 1, p.n_max + 1), dtype=np.complex128)
        vac[0, 0] = 1.0
        rho = evolve_composite(h, jumps, np.kron(rho_atoms0, vac), T)
        return rho, atomic_marginal(rho, p.n_max)

    rho_full, atoms = run(params)
    reduced = evolve(rho_atoms0, Schedule.constant(res.r, phi, T_over_gamma), sample_every=10**9).final_state
    d = params.n_max + 1
    n_op = np.kron(np.eye(16), np.diag(np.arange(d, dtype=float)))
    cutoff_delta = None
    if check_cutoff:
        doubled = PreEliminationModel(2 * params.n_max, params.beta_r, params.beta_s, params.kappa)
        cutoff_delta = trace_distance(atoms, run(doubled)[1])
    return EliminationReport(
        trace_distance=trace_distance(atoms, reduced),
        cutoff_delta=cutoff_delta,
        mean_photons=float(np.trace(n_op @ rho_full).real),
        T_over_gamma=T_over_gamma,
        params=params,
    )
