"""Time evolution under steered squeezed reservoirs.

Times are in units of ``1/Gamma``.  The dissipator convention is
``D[A] rho = A rho A^dagger - 1/2 {A^dagger A, rho}``; the reduced atomic
equation is ``d rho/dt = Gamma D[R(t)] rho`` with no Hamiltonian part.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from darkloop import kernels
from darkloop.linalg import expm_hermitian
from darkloop.model import CollectiveModel, build_model, dfs_block

TRACE_TOL = 1e-6
MIN_EIG_TOL = -1e-5
DEFAULT_DT = 0.01

CSV_COLUMNS = ("t", "r", "phi", "trace_dev", "min_eig", "leakage", "fidelity", "purity")


@dataclass(frozen=True)
class Segment:
    duration: float
    r_start: float
    r_end: float
    phi_start: float
    phi_end: float

    @property
    def rdot(self) -> float:
        return (self.r_end - self.r_start) / self.duration

    @property
    def phidot(self) -> float:
        return (self.phi_end - self.phi_start) / self.duration


@dataclass(frozen=True)
class Schedule:
    """Piecewise-linear reservoir profile ``(r(t), phi(t))``."""

    segments: tuple[Segment, ...]

    def __post_init__(self):
        segs = tuple(s if isinstance(s, Segment) else Segment(*s) for s in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValueError("schedule needs at least one segment")
        for k, s in enumerate(segs):
            if not s.duration > 0:
                raise ValueError(f"segment {k}: duration must be > 0, got {s.duration}")
            if s.r_start < 0 or s.r_end < 0:
                raise ValueError(f"segment {k}: r must stay >= 0")
        for k in range(len(segs) - 1):
            a, b = segs[k], segs[k + 1]
            if not (math.isclose(a.r_end, b.r_start, abs_tol=1e-12) and math.isclose(a.phi_end, b.phi_start, abs_tol=1e-12)):
                raise ValueError(f"schedule is discontinuous between segments {k} and {k + 1}")

    @classmethod
    def constant(cls, r: float, phi: float, T: float) -> Schedule:
        return cls((Segment(T, r, r, phi, phi),))

    @classmethod
    def ramp(cls, r0: float, T: float, phi: float = 0.0) -> Schedule:
        return cls((Segment(T, 0.0, r0, phi, phi),))

    @classmethod
    def phase_sweep(cls, r0: float, phi0: float, T: float) -> Schedule:
        return cls((Segment(T, r0, r0, 0.0, phi0),))

    @classmethod
    def three_step(cls, r0: float, phi0: float, T1: float, T2: float, T3: float) -> Schedule:
        """Ramp ``r`` up, sweep ``phi`` to `phi0`, ramp ``r`` back down."""
        if not 0 < T1 < T2 < T3:
            raise ValueError(f"need 0 < T1 < T2 < T3, got {T1}, {T2}, {T3}")
        return cls((
            Segment(T1, 0.0, r0, 0.0, 0.0),
            Segment(T2 - T1, r0, r0, 0.0, phi0),
            Segment(T3 - T2, r0, 0.0, phi0, phi0),
        ))

    @property
    def total_time(self) -> float:
        return sum(s.duration for s in self.segments)

    @property
    def boundaries(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    def _locate(self, t: float) -> tuple[int, float]:
        edges = self.boundaries
        k = int(np.searchsorted(edges, t, side="right")) - 1
        k = min(max(k, 0), len(self.segments) - 1)
        u = (t - edges[k]) / self.segments[k].duration
        return k, min(max(u, 0.0), 1.0)

    def at(self, t: float) -> tuple[float, float]:
        k, u = self._locate(t)
        s = self.segments[k]
        return s.r_start + u * (s.r_end - s.r_start), s.phi_start + u * (s.phi_end - s.phi_start)

    def rates(self, t: float) -> tuple[float, float]:
        s = self.segments[self._locate(t)[0]]
        return s.rdot, s.phidot

    def table(self) -> np.ndarray:
        """Rows ``(t_start, duration, r_start, r_end, phi_start, phi_end)`` for the kernels."""
        edges = self.boundaries
        return np.array([(edges[k], s.duration, s.r_start, s.r_end, s.phi_start, s.phi_end)
                         for k, s in enumerate(self.segments)])


@dataclass
class Trajectory:
    """Sampled density matrices and physicality monitors of one run."""

    times: np.ndarray
    r: np.ndarray
    phi: np.ndarray
    trace_dev: np.ndarray
    herm_defect: np.ndarray
    min_eig: np.ndarray
    leakage: np.ndarray
    purity: np.ndarray
    fidelity: np.ndarray | None
    final_state: np.ndarray
    states: np.ndarray | None
    dt: float
    n_steps: int
    backend: str
    failed_step: int | None = None
    failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.failed_step is None

    @property
    def status(self) -> str:
        return "OK" if self.ok else f"FAILED at step {self.failed_step}: {self.failure}"

    def monitor_extrema(self) -> dict[str, float]:
        out = {
            "max_trace_dev": float(np.max(self.trace_dev)),
            "max_herm_defect": float(np.max(self.herm_defect)),
            "min_eig": float(np.min(self.min_eig)),
            "max_leakage": float(np.max(self.leakage)),
            "max_purity": float(np.max(self.purity)),
        }
        if self.fidelity is not None:
            out["final_fidelity"] = float(self.fidelity[-1])
        return out

    def to_csv(self, path=None) -> str:
        """Write (and return) the monitor table with the fixed column set."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        fid = self.fidelity if self.fidelity is not None else [None] * len(self.times)
        for row in zip(self.times, self.r, self.phi, self.trace_dev, self.min_eig, self.leakage, fid, self.purity):
            w.writerow(["" if v is None else repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def dissipator(rho: np.ndarray, op: np.ndarray) -> np.ndarray:
    od = op.conj().T
    odo = od @ op
    return op @ rho @ od - 0.5 * (odo @ rho + rho @ odo)


def lindblad_rhs(rho: np.ndarray, R: np.ndarray, Gamma: float) -> np.ndarray:
    """``Gamma (R rho R^dagger - 1/2 {R^dagger R, rho})``."""
    rho = np.asarray(rho)
    R = np.asarray(R)
    if rho.shape != R.shape or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"shape mismatch: rho {rho.shape}, R {R.shape}")
    return Gamma * dissipator(rho, R)


def _sample_steps(n_steps: int, sample_every: int) -> np.ndarray:
    steps = list(range(0, n_steps, max(1, sample_every)))
    steps.append(n_steps)
    return np.array(steps, dtype=np.intp)


def _jump_pairs(model: CollectiveModel, reservoirs: str) -> list[tuple[np.ndarray, np.ndarray]]:
    if reservoirs == "collective":
        return [(np.array(model.S_minus), np.array(model.S_plus))]
    if reservoirs == "independent":
        return [(np.array(sm), np.array(sp)) for sm, sp in zip(model.S_minus_pair, model.S_plus_pair)]
    raise ValueError(f"reservoirs must be 'collective' or 'independent', got {reservoirs!r}")


def step_count(T: float, dt: float) -> tuple[int, float]:
    """Number of steps covering `T` and the step size actually used (<= dt)."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    n = max(1, math.ceil(T / dt - 1e-9))
    return n, T / n


def evolve(
    rho0: np.ndarray,
    schedule: Schedule,
    Gamma: float = 1.0,
    dt: float = DEFAULT_DT,
    sample_every: int = 100,
    *,
    target: Callable[[float], np.ndarray] | None = None,
    reservoirs: str = "collective",
    basis: str = "full",
    store_states: bool = True,
    backend: str | None = None,
    model: CollectiveModel | None = None,
) -> Trajectory:
    """Integrate the reduced master equation along `schedule` with fixed-step RK4.

    Parameters
    ----------
    rho0 : ndarray
        16x16 initial density matrix.
    schedule : Schedule
        Reservoir profile; ``R(t)`` is rebuilt from it at every RK stage.
    Gamma : float
        Collective decay rate multiplying the dissipator.
    dt : float
        Step size upper bound; the step is shrunk so an integer number of
        steps spans the schedule.
    sample_every : int
        Record monitors every this many steps (the final step is always kept).
    target : callable, optional
        ``t -> ket``; when given, ``<psi(t)|rho|psi(t)>`` is recorded.
    reservoirs : {'collective', 'independent'}
        One shared jump operator, or one per cavity pair.
    basis : {'full', 'e'}
        Integrate in the 16-dim product space or in the 12-dim e-span only
        (states are embedded back into 16 dims for monitoring).
    """
    model = model or build_model()
    rho0 = np.asarray(rho0, dtype=np.complex128)
    if rho0.shape != (model.dim, model.dim):
        raise ValueError(f"rho0 must be {model.dim}x{model.dim}, got {rho0.shape}")
    n_steps, dt_used = step_count(schedule.total_time, dt)
    samples = _sample_steps(n_steps, sample_every)
    jumps = _jump_pairs(model, reservoirs)
    if basis == "e":
        if reservoirs != "collective":
            raise ValueError("the e-span fast path only holds for the collective reservoir")
        jumps = [(model.to_e(a), model.to_e(b)) for a, b in jumps]
        start = model.to_e(rho0)
    elif basis == "full":
        start = rho0
    else:
        raise ValueError(f"basis must be 'full' or 'e', got {basis!r}")

    backend = backend or kernels.BACKEND
    snaps, bad = kernels.integrate(start, schedule.table(), jumps, Gamma, dt_used, n_steps, samples,
                                   trace_tol=TRACE_TOL, backend=backend)
    if basis == "e":
        snaps = np.einsum("ia,sab,jb->sij", model.e_basis, snaps, model.e_basis.conj())

    times = samples * dt_used
    times[-1] = schedule.total_time
    rp = np.array([schedule.at(t) for t in times])
    outside = np.eye(model.dim) - model.projector_e
    trace_dev = np.abs(np.einsum("sii->s", snaps).real - 1.0)
    herm = np.max(np.abs(snaps - snaps.conj().transpose(0, 2, 1)), axis=(1, 2))
    finite = np.all(np.isfinite(snaps), axis=(1, 2))
    min_eig = np.array([np.linalg.eigvalsh(0.5 * (s + s.conj().T))[0] if ok else np.nan
                        for s, ok in zip(snaps, finite)])
    leakage = np.einsum("ij,sji->s", outside, snaps).real
    purity = np.einsum("sij,sji->s", snaps, snaps).real
    fidelity = None
    if target is not None:
        kets = [target(t) for t in times]
        fidelity = np.array([np.vdot(v, s @ v).real for v, s in zip(kets, snaps)])

    failed_step, failure = None, None
    if bad >= 0:
        failed_step, failure = int(bad), f"trace deviation above {TRACE_TOL:g}"
    neg = np.flatnonzero(~(min_eig >= MIN_EIG_TOL))
    if neg.size and (failed_step is None or samples[neg[0]] < failed_step):
        failed_step, failure = int(samples[neg[0]]), f"eigenvalue {min_eig[neg[0]]:.2e} below {MIN_EIG_TOL:g}"

    return Trajectory(
        times=times, r=rp[:, 0], phi=rp[:, 1], trace_dev=trace_dev, herm_defect=herm,
        min_eig=min_eig, leakage=leakage, purity=purity, fidelity=fidelity,
        final_state=snaps[-1].copy(), states=snaps if store_states else None,
        dt=dt_used, n_steps=n_steps, backend=backend, failed_step=failed_step, failure=failure,
    )


def evolve_two_reservoirs(rho0, schedule: Schedule, Gamma: float = 1.0, dt: float = DEFAULT_DT, **kwargs) -> Trajectory:
    """:func:`evolve` with each cavity pair coupled to its own reservoir."""
    return evolve(rho0, schedule, Gamma, dt, reservoirs="independent", **kwargs)


def _slices(schedule: Schedule, steps: int) -> list[tuple[Segment, float, int]]:
    total = schedule.total_time
    out = []
    for seg in schedule.segments:
        out.append((seg, seg.duration, max(1, round(steps * seg.duration / total))))
    return out


def adiabatic_propagate(schedule: Schedule, steps: int = 2000) -> np.ndarray:
    """Dark-state-block propagator of ``dv/dt = i G_DF(t) v``.

    Ordered product of exponentials at slice midpoints; slices never straddle
    segment boundaries.  Returns a 4x4 unitary acting on the dark-state
    frame (index order ``psi_1 .. psi_4``).
    """
    u = np.eye(4, dtype=np.complex128)
    for seg, dur, n in _slices(schedule, steps):
        h = dur / n
        for k in range(n):
            um = (k + 0.5) / n
            r = seg.r_start + um * (seg.r_end - seg.r_start)
            phi = seg.phi_start + um * (seg.phi_end - seg.phi_start)
            g = dfs_block(r, phi, seg.rdot, seg.phidot)
            u = expm_hermitian(g, 1j * h) @ u
    return u


def holonomy_phases(u: np.ndarray) -> np.ndarray:
    """Phases of the diagonal of a dark-state propagator."""
    return np.angle(np.diag(u))


def density(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=np.complex128)
    return np.outer(psi, psi.conj())
