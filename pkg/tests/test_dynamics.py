import math

import numpy as np
import pytest
import scipy.integrate

from darkloop import dynamics as d
from darkloop.model import build_model, dfs_state, jump_operator, nu1, nu12


@pytest.fixture(scope="module")
def mdl():
    return build_model()


def _comp_state(mdl):
    return 0.5 * (mdl.e(1) + mdl.e(2) + mdl.e(3) + mdl.e(10))


def test_schedule_validation():
    with pytest.raises(ValueError, match="discontinuous"):
        d.Schedule((d.Segment(1.0, 0.0, 0.5, 0.0, 0.0), d.Segment(1.0, 0.4, 0.4, 0.0, 1.0)))
    with pytest.raises(ValueError, match="duration"):
        d.Schedule.constant(0.5, 0.0, 0.0)
    with pytest.raises(ValueError, match="r must stay"):
        d.Schedule.ramp(-0.5, 1.0)
    with pytest.raises(ValueError):
        d.Schedule.three_step(0.5, 1.0, 2.0, 1.0, 3.0)


def test_schedule_interpolation():
    s = d.Schedule.three_step(0.5, 2.0, 1.0, 3.0, 4.0)
    assert s.total_time == 4.0
    assert s.at(0.5) == pytest.approx((0.25, 0.0))
    assert s.at(2.0) == pytest.approx((0.5, 1.0))
    assert s.at(3.5) == pytest.approx((0.25, 2.0))
    assert s.rates(2.0) == pytest.approx((0.0, 1.0))
    np.testing.assert_allclose(s.table()[:, 0], [0.0, 1.0, 3.0])


def test_step_count_covers_interval():
    n, h = d.step_count(1.0, 0.3)
    assert n == 4 and h == pytest.approx(0.25)
    assert d.step_count(100.0, 0.01)[0] == 10000
    with pytest.raises(ValueError):
        d.step_count(1.0, 0.0)


def test_lindblad_rhs_trace_free_and_shape_check(mdl):
    R = jump_operator(mdl, 0.5, 0.3)
    rho = d.density(_comp_state(mdl))
    assert abs(np.trace(d.lindblad_rhs(rho, R, 1.0))) < 1e-14
    with pytest.raises(ValueError):
        d.lindblad_rhs(rho[:4, :4], R, 1.0)


def test_dark_states_are_stationary(mdl):
    rho = d.density(dfs_state(mdl, 4, 0.6, 0.2))
    traj = d.evolve(rho, d.Schedule.constant(0.6, 0.2, 5.0))
    np.testing.assert_allclose(traj.final_state, rho, atol=1e-12)
    traj1 = d.evolve(d.density(mdl.e(1)), d.Schedule.constant(0.6, 0.2, 5.0))
    np.testing.assert_allclose(traj1.final_state, d.density(mdl.e(1)), atol=1e-14)


def test_evolve_matches_independent_ode_solver(mdl):
    # oracle: scipy DOP853 on the vectorised master equation
    sched = d.Schedule.three_step(0.7, 1.5, 1.0, 3.0, 4.0)
    rho0 = d.density(_comp_state(mdl) + 0.3 * mdl.e(5))
    rho0 /= np.trace(rho0)

    def f(t, y):
        r, phi = sched.at(t)
        rho = y.view(complex).reshape(16, 16)
        return d.lindblad_rhs(rho, jump_operator(mdl, r, phi), 1.0).ravel().view(float)

    y = rho0.ravel().view(float)
    for a, b in zip(sched.boundaries[:-1], sched.boundaries[1:]):
        y = scipy.integrate.solve_ivp(f, (a, b), y, method="DOP853", rtol=1e-12, atol=1e-13).y[:, -1]
    ref = y.view(complex).reshape(16, 16)
    traj = d.evolve(rho0, sched, dt=0.01)
    np.testing.assert_allclose(traj.final_state, ref, atol=1e-9)


def test_monitors_and_failure_flags(mdl):
    traj = d.evolve(d.density(_comp_state(mdl)), d.Schedule.ramp(0.5, 10.0), sample_every=50)
    assert traj.ok and traj.status == "OK"
    assert np.max(traj.trace_dev) <= 1e-8
    assert np.min(traj.min_eig) >= -1e-7
    assert np.max(np.abs(traj.leakage)) <= 1e-10
    assert np.max(traj.purity) <= 1 + 1e-9
    assert traj.times[-1] == 10.0 and traj.states.shape[0] == len(traj.times)

    bad = d.evolve(d.density(_comp_state(mdl)), d.Schedule.constant(1.5, 0.0, 10.0), dt=1.0)
    assert not bad.ok and "FAILED" in bad.status


def test_e_basis_path_agrees_with_full(mdl):
    rho0 = d.density(_comp_state(mdl))
    sched = d.Schedule.three_step(0.5, 3.0, 1.0, 4.0, 5.0)
    full = d.evolve(rho0, sched, basis="full").final_state
    red = d.evolve(rho0, sched, basis="e").final_state
    np.testing.assert_allclose(full, red, atol=1e-13)
    with pytest.raises(ValueError):
        d.evolve(rho0, sched, basis="e", reservoirs="independent")


def test_two_reservoirs_stationary_and_leaky(mdl):
    traj = d.evolve_two_reservoirs(d.density(mdl.e(1)), d.Schedule.constant(0.5, 0.3, 5.0))
    np.testing.assert_allclose(traj.final_state, d.density(mdl.e(1)), atol=1e-14)
    loop = d.evolve_two_reservoirs(d.density(_comp_state(mdl)), d.Schedule.ramp(0.5, 10.0))
    assert loop.ok and np.max(loop.trace_dev) <= 1e-8
    assert loop.leakage[-1] > 1e-3


def test_evolve_rejects_bad_input(mdl):
    with pytest.raises(ValueError):
        d.evolve(np.eye(4), d.Schedule.ramp(0.5, 1.0))
    with pytest.raises(ValueError):
        d.evolve(d.density(mdl.e(1)), d.Schedule.ramp(0.5, 1.0), reservoirs="shared")


def test_to_csv_is_deterministic(mdl, tmp_path):
    sched = d.Schedule.ramp(0.4, 2.0)
    a = d.evolve(d.density(_comp_state(mdl)), sched, sample_every=20).to_csv(tmp_path / "a.csv")
    b = d.evolve(d.density(_comp_state(mdl)), sched, sample_every=20).to_csv()
    assert a == b == (tmp_path / "a.csv").read_text()
    assert a.splitlines()[0] == ",".join(d.CSV_COLUMNS)


def test_adiabatic_propagate_loop_phases():
    r0, phi0 = 0.5, 2.5
    u = d.adiabatic_propagate(d.Schedule.three_step(r0, phi0, 1.0, 2.0, 3.0), steps=600)
    np.testing.assert_allclose(u @ u.conj().T, np.eye(4), atol=1e-12)
    expected = np.exp(-1j * phi0 * np.array([0.0, nu1(r0), nu1(r0), nu12(r0)]))
    np.testing.assert_allclose(np.diag(u), expected, atol=1e-10)
    assert d.holonomy_phases(u)[1] == pytest.approx(-nu1(r0) * phi0)


def test_density_is_projector(mdl):
    rho = d.density(mdl.e(3))
    np.testing.assert_allclose(rho @ rho, rho)
    assert math.isclose(np.trace(rho).real, 1.0)
