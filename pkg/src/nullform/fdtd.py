"""Finite-difference solvers, weighted norms, energy checks, Picard iteration.

Wave operator convention (package-wide): box u = -d_t^2 u + Laplacian u,
so the semilinear equation box u = Q(x,u,grad u) steps as
u_tt = Lap u - Q.  step_linear_wave follows the contract
u^{k+1} = 2u^k - u^{k-1} + dt^2 (Lap_h u^k + f^k), i.e. it solves
u_tt = Lap u + f (equivalently box u = -f).

Two schemes:
* "leapfrog": the 2nd-order kernel above, dt = 0.45 dx / sqrt(n);
* "rk4": method-of-lines classical RK4 on (u, v=u_t) with 4th-order
  spatial stencils, dt = 0.5 dx -- used where 2nd-order dispersion on
  the h-carrier would swamp the O(h^2) quantities being measured.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .constants import (BLOWUP_FACTOR, CFL_LEAPFROG, CFL_LIMIT, CFL_RK4)
from .errors import BlowUpError, CFLError, ConfigError
from .grids import diff1, grad1_2, grad1_4, l2_norm, laplacian2, laplacian4
from .potential import Potential


# ----------------------------------------------------------------------
# wave state and linear kernel


@dataclass(frozen=True)
class WaveState:
    u: np.ndarray
    u_prev: np.ndarray
    dt: float
    dx: tuple
    time: float

    def __post_init__(self):
        n = len(self.dx)
        if self.dt * np.sqrt(n) / min(self.dx) > CFL_LIMIT * (1 + 1e-12):
            raise CFLError(
                f"CFL {self.dt * np.sqrt(n) / min(self.dx):.3f} > {CFL_LIMIT}"
            )
        if self.u.shape != self.u_prev.shape:
            raise ConfigError("WaveState: u and u_prev shapes differ")


def step_linear_wave(state: WaveState, source=None) -> WaveState:
    """One leapfrog step of u_tt = Lap u + f (2nd-order 3/5-point Laplacian)."""
    lap = laplacian2(state.u, state.dx)
    acc = lap if source is None else lap + source
    unew = 2.0 * state.u - state.u_prev + state.dt**2 * acc
    return WaveState(unew, state.u, state.dt, state.dx, state.time + state.dt)


def leapfrog_first_step(u0, v0, dt, dx, source0=None):
    """Start-up level: u^1 = u^0 + dt v^0 + dt^2/2 (Lap u^0 + f^0)."""
    lap = laplacian2(u0, dx)
    acc = lap if source0 is None else lap + source0
    return u0 + dt * v0 + 0.5 * dt**2 * acc


# ----------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    """Fields sampled at time levels: u[k] at times[k], ut[k] = d_t u."""

    times: np.ndarray
    u: np.ndarray
    ut: np.ndarray
    x0: tuple
    dx: tuple

    @property
    def n(self) -> int:
        return len(self.dx)

    def cell_volume(self) -> float:
        v = 1.0
        for d in self.dx:
            v *= d
        return v

    def space_coords(self):
        shape = self.u.shape[1:]
        out = []
        for j, (o, d, m) in enumerate(zip(self.x0, self.dx, shape)):
            sl = [1] * len(shape)
            sl[j] = m
            out.append((o + d * np.arange(m)).reshape(sl))
        return tuple(out)


def null_form_grid(q: Potential, t, xs, u, ut, grad_u):
    """Q = q(x,u) (ut^2 - |grad' u|^2) on grid arrays."""
    g2 = ut * ut
    for g in grad_u:
        g2 = g2 - g * g
    return q.q(t, xs, u) * g2


def _space_coords(shape, x0, dx):
    out = []
    for j, (o, d, m) in enumerate(zip(x0, dx, shape)):
        sl = [1] * len(shape)
        sl[j] = m
        out.append((o + d * np.arange(m)).reshape(sl))
    return tuple(out)


def solve_semilinear(q: Potential, u0, v0, x0, dx, t0, t_end,
                     scheme="leapfrog", sample_every=1,
                     dt=None) -> Trajectory:
    """Explicit solve of box u = Q(x,u,grad u) on [t0, t_end].

    Initial data (u0, v0) at t0; the box must be sized so supports never
    reach the boundary (zero-padding stencils).  With q == 0 and the
    leapfrog scheme this reproduces step_linear_wave bit-for-bit.
    """
    u0 = np.asarray(u0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    n = len(dx)
    xs = _space_coords(u0.shape, x0, dx)
    span = t_end - t0
    if span <= 0:
        raise ConfigError("solve_semilinear: empty time window")
    if scheme == "leapfrog":
        dt_target = dt or CFL_LEAPFROG * min(dx) / np.sqrt(n)
    elif scheme == "rk4":
        dt_target = dt or CFL_RK4 * min(dx)
    else:
        raise ConfigError(f"unknown scheme '{scheme}'")
    nsteps = max(1, int(np.ceil(span / dt_target - 1e-12)))
    dtv = span / nsteps
    guard = BLOWUP_FACTOR * (np.max(np.abs(u0)) + 1e-30)

    keep = list(range(0, nsteps + 1, sample_every))
    if keep[-1] != nsteps:
        keep.append(nsteps)
    keep_set = set(keep)
    times, us, uts = [], [], []

    if scheme == "rk4":
        u, v = u0.copy(), v0.copy()

        def rhs(t, u, v):
            du = v
            dv = laplacian4(u, dx) - null_form_grid(q, t, xs, u, v, grad1_4(u, dx))
            return du, dv

        for k in range(nsteps + 1):
            t = t0 + k * dtv
            if k in keep_set:
                times.append(t)
                us.append(u.copy())
                uts.append(v.copy())
            if k == nsteps:
                break
            k1u, k1v = rhs(t, u, v)
            k2u, k2v = rhs(t + dtv / 2, u + dtv / 2 * k1u, v + dtv / 2 * k1v)
            k3u, k3v = rhs(t + dtv / 2, u + dtv / 2 * k2u, v + dtv / 2 * k2v)
            k4u, k4v = rhs(t + dtv, u + dtv * k3u, v + dtv * k3v)
            u = u + dtv / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
            v = v + dtv / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
            if np.max(np.abs(u)) > guard:
                raise BlowUpError(f"blow-up guard tripped at t={t + dtv:.4f}")
        return Trajectory(np.array(times), np.array(us), np.array(uts), x0, dx)

    # leapfrog
    if dtv * np.sqrt(n) / min(dx) > CFL_LIMIT:
        raise CFLError("leapfrog time step violates CFL")

    def source(t, u, ut_est):
        return -null_form_grid(q, t, xs, u, ut_est, grad1_2(u, dx))

    uts_by_level = {}
    u_prev = u0
    f0 = source(t0, u0, v0)
    u_cur = leapfrog_first_step(u0, v0, dtv, dx, f0)
    level_fields = {0: u0, 1: u_cur}
    for k in range(1, nsteps):
        t = t0 + k * dtv
        # 2nd-order time-derivative estimate at level k without u^{k+1}
        ut_est = (u_cur - u_prev) / dtv + 0.5 * dtv * laplacian2(u_cur, dx)
        f = source(t, u_cur, ut_est)
        u_next = 2.0 * u_cur - u_prev + dtv**2 * (laplacian2(u_cur, dx) + f)
        if np.max(np.abs(u_next)) > guard:
            raise BlowUpError(f"blow-up guard tripped at t={t + dtv:.4f}")
        if k in keep_set:
            uts_by_level[k] = (u_next - u_prev) / (2 * dtv)
            level_fields[k] = u_cur
        u_prev, u_cur = u_cur, u_next
        level_fields[k + 1] = u_cur
        stale = [kk for kk in level_fields if kk < k - 1 and kk not in keep_set]
        for kk in stale:
            del level_fields[kk]

    # assemble samples
    for k in keep:
        t = t0 + k * dtv
        times.append(t)
        if k == 0:
            us.append(u0)
            uts.append(v0)
        elif k == nsteps:
            us.append(u_cur)
            uts.append((u_cur - u_prev) / dtv)
        else:
            us.append(level_fields[k])
            uts.append(uts_by_level[k])
    return Trajectory(np.array(times), np.array(us), np.array(uts), x0, dx)


# ----------------------------------------------------------------------
# weighted norms


@dataclass(frozen=True)
class WeightedNormSpec:
    m: int
    mu: float
    lam: float
    T: float

    def __post_init__(self):
        if self.m < 0 or self.mu <= 0 or self.lam <= 0:
            raise ConfigError("WeightedNormSpec: need m >= 0, mu > 0, lam > 0")


def _multi_indices(n, m):
    """All spatial multi-indices with |alpha| <= m, lexicographic."""
    out = []
    for total in range(m + 1):
        for alpha in itertools.product(range(total + 1), repeat=n):
            if sum(alpha) == total:
                out.append(alpha)
    return out


def _apply_alpha(u, dx, alpha):
    out = u
    for ax, k in enumerate(alpha):
        for _ in range(k):
            out = diff1(out, dx[ax], ax)
    return out


def weighted_norm(u, dx, m, mu) -> float:
    """||u||_{m,mu} = sum_{|alpha|<=m} mu^(m-|alpha|) ||D^alpha u||_{L2}."""
    u = np.asarray(u)
    vol = float(np.prod(dx))
    total = 0.0
    for alpha in _multi_indices(len(dx), m):
        total += mu ** (m - sum(alpha)) * l2_norm(_apply_alpha(u, dx, alpha), vol)
    return total


def sobolev_norm(u, dx, m) -> float:
    """H^m norm in the paper's summed form (weighted_norm with mu = 1)."""
    return weighted_norm(u, dx, m, 1.0)


def spacetime_norm(traj: Trajectory, spec: WeightedNormSpec) -> float:
    """N_{m,mu,lam}(u): exp-weighted L2-in-time of ||u||_{m,mu} plus same
    for d_t u.  Times are measured from the trajectory start."""
    t = traj.times - traj.times[0]
    w = np.exp(-2.0 * spec.lam * t)
    dxs = traj.dx
    nu = np.array([weighted_norm(traj.u[k], dxs, spec.m, spec.mu)
                   for k in range(len(t))])
    nut = np.array([weighted_norm(traj.ut[k], dxs, spec.m, spec.mu)
                    for k in range(len(t))])
    iu = np.sqrt(np.trapezoid(w * nu**2, t))
    iut = np.sqrt(np.trapezoid(w * nut**2, t))
    return float(iu + iut)


# ----------------------------------------------------------------------
# energy estimate check


@dataclass
class EnergyReport:
    C: float
    lam: float
    m: int
    lhs: np.ndarray
    rhs: np.ndarray
    times: np.ndarray


def check_energy_estimate(traj: Trajectory, lam: float, m: int,
                          box_u: Optional[np.ndarray] = None) -> EnergyReport:
    """Empirical constant of the exp-weighted energy inequality.

    E(t) = ||d_t u||_{H^m} + ||u||_{H^{m+1}} + lam ||u||_{H^m};
    LHS(t) = e^{-lam t} E(t) + sqrt(lam) (int_0^t e^{-2 lam s} E^2 ds)^{1/2};
    RHS(t) = E(0) + lam^{-1/2} (int_0^t e^{-2 lam s} ||box u||_{H^m}^2)^{1/2}.
    Returns C = max_t LHS/RHS.  box_u defaults to zero (homogeneous solve).
    """
    t = traj.times - traj.times[0]
    nt = len(t)
    E = np.empty(nt)
    for k in range(nt):
        E[k] = (sobolev_norm(traj.ut[k], traj.dx, m)
                + sobolev_norm(traj.u[k], traj.dx, m + 1)
                + lam * sobolev_norm(traj.u[k], traj.dx, m))
    if box_u is None:
        boxn = np.zeros(nt)
    else:
        boxn = np.array([sobolev_norm(box_u[k], traj.dx, m) for k in range(nt)])
    w = np.exp(-2.0 * lam * t)
    lhs = np.empty(nt)
    rhs = np.empty(nt)
    for k in range(nt):
        ie = np.trapezoid((w * E**2)[: k + 1], t[: k + 1]) if k else 0.0
        ib = np.trapezoid((w * boxn**2)[: k + 1], t[: k + 1]) if k else 0.0
        lhs[k] = np.exp(-lam * t[k]) * E[k] + np.sqrt(lam) * np.sqrt(ie)
        rhs[k] = E[0] + np.sqrt(ib) / np.sqrt(lam)
    C = float(np.max(lhs / rhs))
    return EnergyReport(C, lam, m, lhs, rhs, traj.times)


# ----------------------------------------------------------------------
# Picard iteration


@dataclass
class IterationTrace:
    norms: list
    diffs: list
    ratios: list
    converged: bool
    j_stop: int
    limit_residual: float = float("nan")


def _centered_ut(A, dt):
    """Centered d_t along axis 0, one-sided at the ends."""
    out = np.empty_like(A)
    out[1:-1] = (A[2:] - A[:-2]) / (2 * dt)
    out[0] = (A[1] - A[0]) / dt
    out[-1] = (A[-1] - A[-2]) / dt
    return out


def _discrete_box(A, dt, dx):
    """box_h = -(2nd time difference) + Lap_h, leapfrog-consistent."""
    out = np.zeros_like(A)
    out[1:-1] = -(A[2:] - 2 * A[1:-1] + A[:-2]) / dt**2
    for k in range(A.shape[0]):
        out[k] += laplacian2(A[k], dx)
    out[0] = out[1]
    out[-1] = out[-2]
    return out


def _nullform_traj(q, times, xs, A, dt, dx):
    """Q(x, A, grad A) with leapfrog-consistent centered differences."""
    ut = _centered_ut(A, dt)
    out = np.empty_like(A)
    for k in range(A.shape[0]):
        g2 = ut[k] ** 2
        for g in grad1_2(A[k], dx):
            g2 = g2 - g**2
        out[k] = q.q(times[k], xs, A[k]) * g2
    return out


def _solve_forced_wave(source, dt, dx):
    """Leapfrog solve of box w = g with zero data; source = g per level.

    Returns the trajectory array w[k].  Uses f = -g in the u_tt = Lap u + f
    form of the kernel.
    """
    nt = source.shape[0]
    w = np.zeros_like(source)
    f = -source
    # w^0 = 0, d_t w^0 = 0
    w[1] = 0.5 * dt**2 * (laplacian2(w[0], dx) + f[0])
    for k in range(1, nt - 1):
        w[k + 1] = (2 * w[k] - w[k - 1]
                    + dt**2 * (laplacian2(w[k], dx) + f[k]))
    return w


def picard_iterate(q: Potential, v_traj: Trajectory, residual=None,
                   M: int = 2, spec: WeightedNormSpec = None,
                   tol: float = 1e-10, j_max: int = 12):
    """Fixed-point iteration upgrading v to a discrete exact solution.

    box w_0 = -r;  box w_j = [Q(v+w_{j-1}) - Q(v)] - r,  zero data,
    where r = box_h v - Q_h(v) is the leapfrog-consistent discrete
    residual (supplied or computed here).  All operators match the
    leapfrog kernel so the limit satisfies the discrete equation to
    iteration tolerance.

    Returns (IterationTrace, limit Trajectory).
    """
    if spec is None:
        raise ConfigError("picard_iterate: WeightedNormSpec required")
    times = v_traj.times
    dt = float(times[1] - times[0])
    dx = v_traj.dx
    xs = _space_coords(v_traj.u.shape[1:], v_traj.x0, dx)
    v = v_traj.u
    if residual is None:
        residual = _discrete_box(v, dt, dx) - _nullform_traj(q, times, xs, v, dt, dx)
    Qv = _nullform_traj(q, times, xs, v, dt, dx)

    def wrap(warr):
        return Trajectory(times, warr, _centered_ut(warr, dt), v_traj.x0, dx)

    norms, diffs, ratios = [], [], []
    w_prev = _solve_forced_wave(-residual, dt, dx)
    norms.append(spacetime_norm(wrap(w_prev), spec))
    converged = False
    j_stop = 0
    w = w_prev
    for j in range(1, j_max + 1):
        Qvw = _nullform_traj(q, times, xs, v + w_prev, dt, dx)
        w = _solve_forced_wave(Qvw - Qv - residual, dt, dx)
        norms.append(spacetime_norm(wrap(w), spec))
        d = spacetime_norm(wrap(w - w_prev), spec)
        diffs.append(d)
        if len(diffs) >= 2 and diffs[-2] > 0:
            ratios.append(diffs[-1] / diffs[-2])
        j_stop = j
        if d < tol:
            converged = True
            break
        w_prev = w
    # residual of the limit in the discrete equation
    lim = v + w
    rlim = (_discrete_box(lim, dt, dx)
            - _nullform_traj(q, times, xs, lim, dt, dx))
    interior = rlim[2:-2]
    vol = float(np.prod(dx))
    limres = l2_norm(interior, vol * dt) if interior.size else float("nan")
    trace = IterationTrace(norms, diffs, ratios, converged, j_stop, limres)
    return trace, wrap(w)
