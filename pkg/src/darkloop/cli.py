"""``darkloop`` command line.

Options come from (lowest to highest precedence) built-in defaults, a flat
JSON config file given with ``--config``, and command-line flags.  Times
are in units of ``1/Gamma`` except for ``feasibility`` (MHz, ms).

Exit status: 0 success, 1 usage error, 2 a physics monitor failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field, fields

import numpy as np

from darkloop import kernels
from darkloop.dynamics import DEFAULT_DT, Schedule, adiabatic_propagate, density
from darkloop.elimination import PreEliminationModel, validate_elimination
from darkloop.experiments import (
    LoopSpec,
    PhysicalParams,
    feasibility,
    run_cphase,
    run_cz,
    run_loop_fidelity,
    run_ramp_fidelity,
    run_sweep,
    sweep_csv,
    wrap_phase,
)
from darkloop.linalg import nullspace
from darkloop.model import build_model, cz_point, dfs_state, jump_operator, nu1, nu12

log = logging.getLogger("darkloop")

EXPERIMENTS = (
    "ramp", "loop", "cphase", "cz", "holonomy", "validate-elimination",
    "two-reservoirs", "feasibility", "dfs-check",
)
REQUIRED = {
    "ramp": ("r0", "t"),
    "loop": ("r0", "t"),
    "cphase": ("r0", "t3"),
    "cz": ("t3",),
    "holonomy": ("r0",),
    "validate-elimination": (),
    "two-reservoirs": ("r0", "t3"),
    "feasibility": (),
    "dfs-check": ("r0",),
}
SWEEPABLE = {"ramp": "t", "loop": "t", "cphase": "t3", "two-reservoirs": "t3"}
DFS_TOL = 1e-10


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    experiment: str
    r0: list[float] | None = None
    t: list[float] | None = None
    t3: list[float] | None = None
    phi0: float | None = None
    phi: float = 0.0
    dt: float = DEFAULT_DT
    n_max: int = 3
    kappa_over_beta: float = 10.0
    steps: int = 4000
    out: str = "darkloop-out"
    csv: bool = True
    jobs: int = 1
    backend: str | None = None
    g: float = 2000.0
    kappa: float = 10.0
    gamma: float = 10.0
    kappa_f: float = 10.0
    nu_fiber: float = 2.0e4
    omega_over_2delta: float = 1e-3 / math.sqrt(2.0)
    extra: dict = field(default_factory=dict)

    def points(self) -> list[tuple[float, float]]:
        """(r0, time) grid in sweep order: r0 outer, time inner."""
        times = getattr(self, SWEEPABLE[self.experiment])
        return [(r, t) for r in self.r0 for t in times]


_LIST_KEYS = {"r0", "t", "t3"}
_FIELDS = {f.name for f in fields(RunConfig)} - {"extra"}


def parse_values(value) -> list[float]:
    """Accept a number, a list, ``"a,b,c"`` or ``"start:stop:num"`` (inclusive linspace)."""
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, list):
        return [float(v) for v in value]
    text = str(value).strip()
    if text.count(":") == 2:
        start, stop, num = text.split(":")
        return [float(x) for x in np.linspace(float(start), float(stop), int(num))]
    return [float(x) for x in text.split(",") if x.strip()]


def _coerce(key: str, value):
    if value is None:
        return None
    try:
        if key in _LIST_KEYS:
            vals = parse_values(value)
            if not vals:
                raise UsageError(f"{key}: sweep range is empty")
            return vals
        if key in ("n_max", "steps", "jobs"):
            return int(value)
        if key in ("csv",):
            return bool(value)
        if key in ("out", "experiment", "backend"):
            return str(value)
        return float(value)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{key}: invalid value {value!r}") from exc


def load_config_file(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise UsageError(f"config: file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config: malformed JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config: top level must be a JSON object")
    data = {k.replace("-", "_"): v for k, v in data.items()}
    unknown = sorted(set(data) - _FIELDS)
    if unknown:
        raise UsageError(f"config: unknown key(s): {', '.join(unknown)}")
    return data


def parse_config(argv: list[str] | None = None) -> RunConfig:
    """Build a validated :class:`RunConfig`; flags override config-file values."""
    ns = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(ns).items() if k != "config" and v is not None}
    merged = load_config_file(ns.config) if getattr(ns, "config", None) else {}
    merged.update(flags)
    if "experiment" not in merged:
        raise UsageError("experiment: no experiment given (subcommand or config key)")
    if merged["experiment"] not in EXPERIMENTS:
        raise UsageError(f"experiment: unknown experiment {merged['experiment']!r}")
    values = {k: _coerce(k, v) for k, v in merged.items()}
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    for key in REQUIRED[cfg.experiment]:
        if getattr(cfg, key) is None:
            raise UsageError(f"{key}: required for '{cfg.experiment}'")
    for key in ("t", "t3"):
        vals = getattr(cfg, key)
        if vals is not None and any(not v > 0 for v in vals):
            raise UsageError(f"{key}: times must be positive")
    if cfg.r0 is not None and any(v < 0 for v in cfg.r0):
        raise UsageError("r0: must be >= 0")
    if cfg.experiment in ("cphase", "two-reservoirs", "ramp", "loop") and any(v <= 0 for v in cfg.r0):
        raise UsageError("r0: must be > 0")
    if not cfg.dt > 0:
        raise UsageError("dt: must be positive")
    if cfg.jobs < 1:
        raise UsageError("jobs: must be >= 1")
    if cfg.n_max < 1:
        raise UsageError("n_max: must be >= 1")
    if cfg.backend is not None and cfg.backend not in kernels.available_backends():
        raise UsageError(f"backend: {cfg.backend!r} not available (have {kernels.available_backends()})")
    if cfg.experiment not in SWEEPABLE and cfg.r0 is not None and len(cfg.r0) > 1:
        raise UsageError(f"r0: '{cfg.experiment}' takes a single value")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="flat JSON config file")
    common.add_argument("--out", help="output directory (default darkloop-out)")
    common.add_argument("--dt", help="RK4 step in units of 1/Gamma (default 0.01)")
    common.add_argument("--jobs", help="parallel sweep workers")
    common.add_argument("--csv", action=argparse.BooleanOptionalAction, help="write CSV files (default on)")
    common.add_argument("--backend", choices=("compiled", "python"), help="integrator backend")

    parser = _Parser(prog="darkloop", description=__doc__.splitlines()[0], parents=[common],
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="experiment", parser_class=_Parser)

    def add(name, help_text, *opts):
        p = sub.add_parser(name, help=help_text, parents=[common], argument_default=argparse.SUPPRESS)
        for flag, h in opts:
            p.add_argument(flag, help=h)
        return p

    r0 = ("--r0", "squeeze parameter(s): value, list a,b,c or start:stop:num")
    add("ramp", "ramp r from 0 to r0", r0, ("--t", "ramp duration(s)"))
    add("loop", "sweep phi from 0 to 2 pi at fixed r0", r0, ("--t", "sweep duration(s)"))
    add("cphase", "three-step loop CPHASE gate", r0, ("--t3", "total loop time(s)"), ("--phi0", "loop phase (default pi/|2 nu1 - nu12|)"))
    add("cz", "Controlled-Z loop at the CZ point", ("--t3", "total loop time"))
    add("holonomy", "ideal adiabatic dark-state propagator", r0, ("--phi0", "loop phase (default 2 pi)"),
        ("--steps", "midpoint slices (default 4000)"))
    add("validate-elimination", "atoms + cavity mode vs the reduced model", ("--r0", "squeeze parameter (default 0.5)"),
        ("--phi", "squeeze phase (default 0)"), ("--n-max", "Fock cutoff (default 3)"),
        ("--kappa-over-beta", "kappa / beta_r (default 10)"), ("--t", "duration (default 10)"))
    add("two-reservoirs", "three-step loop with independent reservoirs", r0, ("--t3", "total loop time(s)"),
        ("--phi0", "loop phase (default pi/|2 nu1 - nu12|)"))
    add("feasibility", "effective rates and gate time (MHz, ms)", ("--g", "MHz"), ("--kappa", "MHz"), ("--gamma", "MHz"),
        ("--kappa-f", "fiber decay, MHz"), ("--nu-fiber", "cavity-fiber coupling, MHz"),
        ("--omega-over-2delta", "drive ratio"), ("--t3", "loop time in 1/Gamma (default 1100)"))
    add("dfs-check", "dark-state kernel property", r0, ("--phi", "squeeze phase (default 0)"))
    return parser


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _write(cfg: RunConfig, name: str, text: str) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, name)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _gate_row(r0, T, rep) -> dict:
    return {"r0": r0, "T": T, "phi0": rep.loop.phi0, "F": rep.fidelity, "chi1": rep.chi1,
            "chi12": rep.chi12, "Delta": rep.delta, "converged": rep.converged}


def _fid_row(r0, T, res) -> dict:
    return {"r0": r0, "T": T, "phi0": None, "F": res.fidelity, "chi1": None, "chi12": None,
            "Delta": None, "converged": res.converged}


def _run_point(cfg: RunConfig, r0: float, T: float):
    kw = {"dt": cfg.dt, "backend": cfg.backend}
    if cfg.experiment == "ramp":
        return run_ramp_fidelity(r0, T, **kw)
    if cfg.experiment == "loop":
        return run_loop_fidelity(r0, T, **kw)
    loop = LoopSpec.standard(r0, T, cfg.phi0)
    reservoirs = "independent" if cfg.experiment == "two-reservoirs" else "collective"
    return run_cphase(loop, reservoirs=reservoirs, **kw)


def _simulation_summary(cfg: RunConfig, res) -> tuple[list[tuple[str, object]], bool]:
    traj = res.trajectory
    lines = [("fidelity", res.fidelity), ("fidelity_dt_half", res.fidelity_half_dt),
             ("dt_halving_delta", res.dt_delta), ("dt_halving_trace_distance", res.dt_trace_distance),
             ("converged", res.converged), ("status", traj.status), ("dt_used", traj.dt),
             ("steps", traj.n_steps), ("backend", traj.backend)]
    if hasattr(res, "chi1"):
        exp = res.expected
        lines[1:1] = [
            ("r0", res.loop.r0), ("phi0", res.loop.phi0), ("T1", res.loop.T1), ("T2", res.loop.T2), ("T3", res.loop.T3),
            ("chi1", res.chi1), ("chi1_expected", exp["chi1"]),
            ("chi12", res.chi12), ("chi12_expected", exp["chi12"]),
            ("Delta", res.delta), ("Delta_expected", exp["Delta"]),
            ("phases_reliable", res.reliable), ("fidelity_after_local_correction", res.corrected_fidelity),
        ]
    lines += [(f"monitor_{k}", v) for k, v in traj.monitor_extrema().items()]
    return lines, traj.ok


def _holonomy(cfg: RunConfig):
    r0 = cfg.r0[0]
    phi0 = cfg.phi0 if cfg.phi0 is not None else 2.0 * math.pi
    sched = Schedule.three_step(r0, phi0, 1.0, 2.0, 3.0)
    u = adiabatic_propagate(sched, steps=cfg.steps)
    ph = np.angle(np.diag(u))
    off = float(np.max(np.abs(u - np.diag(np.diag(u)))))
    lines = [("r0", r0), ("phi0", phi0), ("chi1", ph[1]), ("chi1_expected", wrap_phase(-nu1(r0) * phi0)),
             ("chi12", ph[3]), ("chi12_expected", wrap_phase(-nu12(r0) * phi0)),
             ("Delta", wrap_phase(ph[3] - 2 * ph[1])),
             ("Delta_expected", wrap_phase((2 * nu1(r0) - nu12(r0)) * phi0)), ("max_offdiagonal", off),
             ("unitarity_defect", float(np.max(np.abs(u @ u.conj().T - np.eye(4))))),
             ("dt_halving_delta", "n/a (no time stepping)")]
    return lines, True


def _dfs_check(cfg: RunConfig):
    model = build_model()
    r0 = cfg.r0[0]
    R = jump_operator(model, r0, cfg.phi)
    norms = [float(np.linalg.norm(R @ dfs_state(model, j, r0, cfg.phi))) for j in range(1, 5)]
    q = np.eye(16) - model.projector_e
    lines = [("r0", r0), ("phi", cfg.phi), ("max_norm_R_psi", max(norms)),
             *[(f"norm_R_psi{j}", n) for j, n in enumerate(norms, start=1)],
             ("kernel_dim_full", len(nullspace(R))), ("kernel_dim_e_span", len(nullspace(np.vstack([R, q])))),
             ("dt_halving_delta", "n/a (no time stepping)")]
    return lines, max(norms) <= DFS_TOL


def _validate_elimination(cfg: RunConfig):
    model = build_model()
    r0 = cfg.r0[0] if cfg.r0 else 0.5
    T = cfg.t[0] if cfg.t else 10.0
    psi = 0.5 * (model.e(1) + model.e(2) + model.e(3) + model.e(10))
    params = PreEliminationModel.for_reservoir(r0, cfg.kappa_over_beta, cfg.n_max)
    rep = validate_elimination(params, density(psi), phi=cfg.phi, T_over_gamma=T)
    lines = [("r0", r0), ("phi", cfg.phi), ("kappa_over_beta", cfg.kappa_over_beta), ("n_max", cfg.n_max),
             ("T", T), ("trace_distance", rep.trace_distance), ("cutoff_doubling_delta", rep.cutoff_delta),
             ("mean_photons", rep.mean_photons), ("dt_halving_delta", "n/a (exact propagation)")]
    return lines, True


def _feasibility(cfg: RunConfig):
    params = PhysicalParams(cfg.g, cfg.kappa, cfg.gamma, cfg.kappa_f, cfg.nu_fiber, cfg.omega_over_2delta)
    T3 = cfg.t3[0] if cfg.t3 else 1100.0
    rep = feasibility(params, T3)
    lines = [("beta_MHz", rep.beta), ("Gamma_MHz", rep.Gamma), ("gamma_eff_MHz", rep.gamma_eff),
             ("kappa_eff_MHz", rep.kappa_eff), ("Gamma_over_gamma_eff", rep.ratio), ("T3_inverse_Gamma", T3),
             ("gate_time_ms", rep.gate_time_ms), ("kappa_eff_below_gamma_eff", rep.kappa_eff_below_gamma_eff),
             ("dt_halving_delta", "n/a (no time stepping)")]
    lines += [("warning", w) for w in rep.warnings]
    return lines, True


def run(cfg: RunConfig) -> int:
    """Execute one configured experiment; returns the process exit code."""
    header = [("experiment", cfg.experiment)]
    if cfg.experiment == "holonomy":
        lines, ok = _holonomy(cfg)
    elif cfg.experiment == "dfs-check":
        lines, ok = _dfs_check(cfg)
    elif cfg.experiment == "validate-elimination":
        lines, ok = _validate_elimination(cfg)
    elif cfg.experiment == "feasibility":
        lines, ok = _feasibility(cfg)
    elif cfg.experiment == "cz":
        rep = run_cz(cfg.t3[0], dt=cfg.dt, backend=cfg.backend)
        lines, ok = _simulation_summary(cfg, rep)
        lines.insert(0, ("target", "-(-e1 + e2 + e3 + e10)/2, no local correction"))
        if cfg.csv:
            lines.append(("trajectory_csv", _write(cfg, "trajectory.csv", rep.trajectory.to_csv())))
    else:
        points = cfg.points()
        results = run_sweep(lambda r0, T: _run_point(cfg, r0, T), points, jobs=cfg.jobs)
        if len(points) == 1:
            lines, ok = _simulation_summary(cfg, results[0])
            lines.insert(0, ("r0", points[0][0]))
            if cfg.csv:
                lines.append(("trajectory_csv", _write(cfg, "trajectory.csv", results[0].trajectory.to_csv())))
        else:
            make_row = _fid_row if cfg.experiment in ("ramp", "loop") else _gate_row
            rows = [make_row(r0, T, res) for (r0, T), res in zip(points, results)]
            ok = all(res.trajectory.ok for res in results)
            worst = max(res.dt_delta or 0.0 for res in results)
            lines = [("points", len(points)), ("min_fidelity", min(r["F"] for r in rows)),
                     ("max_fidelity", max(r["F"] for r in rows)), ("all_converged", all(r["converged"] for r in rows)),
                     ("max_dt_halving_delta", worst), ("status", "OK" if ok else "FAILED")]
            if cfg.csv:
                lines.append(("sweep_csv", _write(cfg, "sweep.csv", sweep_csv(rows))))
    text = "".join(f"{k}: {_fmt(v)}\n" for k, v in header + lines)
    _write(cfg, "summary.txt", text)
    sys.stdout.write(text)
    return 0 if ok else 2


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        sys.stderr.write(f"darkloop: error: {exc}\n")
        return 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
