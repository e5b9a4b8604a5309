"""Leapfrog/RK4 solvers, weighted norms, energy check, Picard iteration."""

import numpy as np
import pytest

from nullform.errors import CFLError, ConfigError
from nullform.fdtd import (
    IterationTrace, Trajectory, WaveState, WeightedNormSpec,
    check_energy_estimate, leapfrog_first_step, picard_iterate,
    solve_semilinear, spacetime_norm, step_linear_wave, weighted_norm,
)
from nullform.potential import get_potential
from nullform.profiles import bump


def _bump_arrays(x, prof, shift=0.0):
    return prof.f(x - shift), prof.df(x - shift)


def test_wavestate_cfl_guard():
    u = np.zeros((8, 8))
    with pytest.raises(CFLError):
        WaveState(u, u, dt=0.1, dx=(0.1, 0.1), time=0.0)
    WaveState(u, u, dt=0.063, dx=(0.1, 0.1), time=0.0)  # under the limit


def test_zero_data_stays_zero():
    u = np.zeros(101)
    st = WaveState(u, u, dt=0.004, dx=(0.01,), time=0.0)
    for _ in range(20):
        st = step_linear_wave(st)
    assert np.all(st.u == 0.0)


def test_plane_pulse_translation():
    # u(t,x) = b(x - t) solves the 1D wave equation; leapfrog is O(dx^2)
    prof = bump(0.8, 1.0)
    errs = []
    for nx in (200, 400):
        dx = 6.0 / nx
        x = -3.0 + dx * np.arange(nx + 1)
        dt = 0.4 * dx
        nsteps = int(round(1.0 / dt))
        t_end = nsteps * dt
        u0 = prof.f(x + 1.0)
        v0 = -prof.df(x + 1.0)
        st = WaveState(leapfrog_first_step(u0, v0, dt, (dx,)), u0, dt, (dx,), dt)
        for _ in range(nsteps - 1):
            st = step_linear_wave(st)
        errs.append(np.max(np.abs(st.u - prof.f(x - t_end + 1.0))))
    assert errs[0] < 0.05
    assert errs[1] < 0.4 * errs[0]  # ~2nd order


def test_manufactured_source_convergence():
    # u(t,x) = (1 + t^2) b(x); f = u_tt - u_xx = 2 b - (1+t^2) b''
    prof = bump(0.8, 1.0)
    errs = []
    for nx in (200, 400):
        dx = 4.0 / nx
        x = -2.0 + dx * np.arange(nx + 1)
        b, db2 = prof.f(x), prof.d2f(x)
        dt = 0.4 * dx
        nsteps = int(round(0.8 / dt))

        def f_at(t):
            return 2.0 * b - (1 + t**2) * db2

        u0, v0 = b.copy(), np.zeros_like(b)
        st = WaveState(leapfrog_first_step(u0, v0, dt, (dx,), f_at(0.0)),
                       u0, dt, (dx,), dt)
        for k in range(1, nsteps):
            st = step_linear_wave(st, f_at(k * dt))
        t_end = nsteps * dt
        errs.append(np.max(np.abs(st.u - (1 + t_end**2) * b)))
    assert errs[1] < 0.35 * errs[0]  # ~2nd order


def test_semilinear_zero_potential_matches_linear_kernel():
    # with q == 0 the nonlinear driver reduces to the bare kernel, bit for bit
    prof = bump(0.5, 1.0)
    nx = 160
    dx = 4.0 / nx
    x = -2.0 + dx * np.arange(nx + 1)
    u0 = prof.f(x)
    v0 = -prof.df(x)
    q0 = get_potential("zero", 1)
    traj = solve_semilinear(q0, u0, v0, (-2.0,), (dx,), 0.0, 0.5,
                            scheme="leapfrog", dt=0.4 * dx)
    nsteps = len(traj.times) - 1
    dt = traj.times[1] - traj.times[0]
    st = WaveState(leapfrog_first_step(u0, v0, dt, (dx,)), u0, dt, (dx,), dt)
    for _ in range(nsteps - 1):
        st = step_linear_wave(st)
    assert np.array_equal(traj.u[-1], st.u)


def test_semilinear_rk4_linear_accuracy():
    # rk4 + 4th-order stencils: faster decay than the 2nd-order kernel
    prof = bump(0.8, 1.0)
    q0 = get_potential("zero", 1)
    errs = []
    for nx in (200, 400):
        dx = 6.0 / nx
        x = -3.0 + dx * np.arange(nx + 1)
        traj = solve_semilinear(q0, prof.f(x + 1.0), -prof.df(x + 1.0),
                                (-3.0,), (dx,), 0.0, 1.0, scheme="rk4")
        errs.append(np.max(np.abs(traj.u[-1] - prof.f(x - traj.times[-1] + 1.0))))
    assert errs[0] < 5e-3
    assert errs[1] < 0.25 * errs[0]


def test_semilinear_nonlinearity_changes_solution():
    prof = bump(0.5, 0.5)
    nx = 240
    dx = 6.0 / nx
    x = -3.0 + dx * np.arange(nx + 1)
    u0, v0 = prof.f(x + 1.2), -prof.df(x + 1.2)
    q0 = get_potential("zero", 1)
    qb = get_potential("radial_bump", 1, amplitude=5.0)
    a = solve_semilinear(q0, u0, v0, (-3.0,), (dx,), 0.0, 1.5, scheme="rk4")
    b = solve_semilinear(qb, u0, v0, (-3.0,), (dx,), 0.0, 1.5, scheme="rk4")
    assert np.max(np.abs(a.u[-1] - b.u[-1])) > 1e-4


def test_weighted_norm_examples():
    # constant field: ||u||_{1,mu} = mu ||u||_{L2} exactly (derivative = 0)
    nx, dx = 50, 0.1
    u = np.full(nx, 3.0)
    l2 = 3.0 * np.sqrt(nx * dx)
    assert weighted_norm(u, (dx,), 0, 7.0) == pytest.approx(l2)
    assert weighted_norm(u, (dx,), 1, 2.5) == pytest.approx(2.5 * l2, rel=1e-12)
    # linearity in mu for m = 1: a0 mu + a1
    x = dx * np.arange(nx)
    f = np.sin(x)
    n1 = weighted_norm(f, (dx,), 1, 1.0)
    n2 = weighted_norm(f, (dx,), 1, 2.0)
    n3 = weighted_norm(f, (dx,), 1, 3.0)
    assert n3 - n2 == pytest.approx(n2 - n1, rel=1e-12)


def test_weighted_norm_spec_validation():
    with pytest.raises(ConfigError):
        WeightedNormSpec(m=-1, mu=1.0, lam=1.0, T=1.0)
    with pytest.raises(ConfigError):
        WeightedNormSpec(m=2, mu=0.0, lam=1.0, T=1.0)


def test_spacetime_norm_constant_in_time():
    # N for u(t) = const c: ||c|| sqrt((1 - e^{-2 lam T})/(2 lam)), ut = 0
    nx, dx = 64, 0.05
    c = np.full(nx, 2.0)
    nt, T = 401, 2.0
    times = np.linspace(0.0, T, nt)
    traj = Trajectory(times, np.broadcast_to(c, (nt, nx)).copy(),
                      np.zeros((nt, nx)), (0.0,), (dx,))
    lam = 1.5
    spec = WeightedNormSpec(m=0, mu=1.0, lam=lam, T=T)
    expect = 2.0 * np.sqrt(nx * dx) * np.sqrt((1 - np.exp(-2 * lam * T)) / (2 * lam))
    assert spacetime_norm(traj, spec) == pytest.approx(expect, rel=1e-3)


def test_energy_estimate_linear_wave():
    # homogeneous wave solution: empirical constant stays O(1) across lambda
    prof = bump(0.5, 1.0)
    nx = 200
    dx = 6.0 / nx
    x = -3.0 + dx * np.arange(nx + 1)
    q0 = get_potential("zero", 1)
    traj = solve_semilinear(q0, prof.f(x), -prof.df(x), (-3.0,), (dx,),
                            0.0, 1.5, scheme="leapfrog", sample_every=5)
    for lam in (1.0, 2.0, 4.0):
        rep = check_energy_estimate(traj, lam, m=1)
        assert rep.C < 10.0
        assert rep.C >= 1.0 - 1e-12  # LHS(0)/RHS(0) = 1


def _pulse_trajectory(eps, nx=240, t1=1.0):
    """Discrete linear-wave pulse: leapfrog solve with data eps b(x + 1.2).

    Using the solver's own output makes the discrete residual of v pure
    nonlinearity (the leapfrog recurrence is satisfied exactly).
    """
    prof = bump(0.4, 1.0)
    dx = 6.0 / nx
    x = -3.0 + dx * np.arange(nx + 1)
    q0 = get_potential("zero", 1)
    return solve_semilinear(q0, eps * prof.f(x + 1.2), -eps * prof.df(x + 1.2),
                            (-3.0,), (dx,), 0.0, t1, scheme="leapfrog",
                            dt=0.45 * dx)


def test_picard_zero_residual_trivial():
    q0 = get_potential("zero", 1)
    traj = _pulse_trajectory(0.0, nx=80, t1=0.3)
    spec = WeightedNormSpec(m=2, mu=4.0, lam=2.0, T=0.3)
    trace, w = picard_iterate(q0, traj, residual=np.zeros_like(traj.u),
                              spec=spec)
    assert trace.converged and trace.j_stop == 1
    assert np.all(w.u == 0.0)


def test_picard_upgrades_approximate_solution():
    # v solves the linear equation; with a potential switched on it misses
    # the semilinear one by O(eps^2).  Picard contracts onto a discrete
    # exact solution: diffs decay geometrically, limit residual ~ tol.
    q = get_potential("radial_bump", 1, amplitude=2.0)
    traj = _pulse_trajectory(0.05)
    spec = WeightedNormSpec(m=2, mu=4.0, lam=2.0, T=1.0)
    trace, w = picard_iterate(q, traj, spec=spec, tol=1e-10, j_max=12)
    assert trace.converged
    assert all(r < 0.5 for r in trace.ratios)
    assert trace.limit_residual < 1e-7
    # the correction is genuinely nonzero but small relative to v
    assert 0.0 < trace.norms[-1] < 0.2 * spacetime_norm(traj, spec)


def test_picard_requires_spec():
    q0 = get_potential("zero", 1)
    traj = _pulse_trajectory(0.0, nx=40, t1=0.2)
    with pytest.raises(ConfigError):
        picard_iterate(q0, traj)
