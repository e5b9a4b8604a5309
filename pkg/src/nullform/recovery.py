"""Inverse pipeline: time-slice demodulation, logarithmic ray data, and
2-D potential reconstruction from a probe-direction sweep.

A measured slice u(T', x') of the semilinear wave contains the order-h
oscillatory coefficient

    u = phi_V + h (A_{1,0} e^{i psi/h} + c.c.) + O(h^2),
    A_{1,0}(T', x') = 1/2 chi(psi) (A - iB) exp(I(T', x')),

with psi = T' + omega.x' and I the forward ray integral of the scalar
transport coefficient F = q phi' <Vt,Wt>_M.  Once the pulse band has fully
crossed supp q, I equals the complete light-ray transform sample of F, so

    Re log( 2 Ahat / (chi (A - iB)) )

is a sinogram entry.  Sweeping omega over >= 90 directions in the reduced
(time-independent, u-independent, theta _|_ omega) configuration turns the
collection into an X-ray sinogram of q, inverted by raytransform.

Measurement conventions: a slice stores real samples on a (offsets, r)
grid, where the last axis runs along omega through x' = s theta + r omega
with theta = omega-perp, so the carrier phase is psi = T' + r on every row.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .constants import PPW_MIN
from .errors import ConfigError, UnresolvedCarrierError
from .fdtd import solve_semilinear
from .geoptics import AnsatzSpec, a10_points, dt_u_incident, u_incident
from .minkowski import LightVector
from .potential import Potential
from .profiles import Profile
from .raytransform import Reconstruction, Sinogram, invert_xray_2d, xray_reduce


# ----------------------------------------------------------------------
# measurement containers


@dataclass
class TimeSliceMeasurement:
    """Real samples of u(T', .) along probe-aligned lines.

    u has shape (..., n_r); the last axis runs along the carrier
    direction omega with coordinate r = omega.x', so psi = Tprime + r.
    `background` optionally holds phi_V on the same points; subtracting
    it before filtering reduces low-pass leakage but is not required
    (the background sits at carrier frequency after demodulation).
    """

    u: np.ndarray
    r: np.ndarray
    h: float
    Tprime: float
    background: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.r = np.asarray(self.r, dtype=float)
        if self.u.shape[-1] != self.r.size:
            raise ConfigError("TimeSliceMeasurement: last axis of u must "
                              "match the r axis")
        if self.r.size < 4:
            raise ConfigError("TimeSliceMeasurement: need >= 4 samples "
                              "along omega")
        dr = np.diff(self.r)
        if np.any(dr <= 0) or np.max(np.abs(dr - dr[0])) > 1e-12 * dr[0]:
            raise ConfigError("TimeSliceMeasurement: r axis must be "
                              "uniform increasing")
        if self.h <= 0:
            raise ConfigError("TimeSliceMeasurement: h must be positive")

    @property
    def dr(self) -> float:
        return float(self.r[1] - self.r[0])


@dataclass
class ExtractedAmplitude:
    """Complex Ahat_{1,0}(T', .) per measurement point plus a fit metric.

    fit_residual is the relative power of the demodulated signal removed
    by the low-pass filter (background carrier, conjugate band, higher
    harmonics); it is a diagnostic, not an error bound.
    """

    values: np.ndarray
    r: np.ndarray
    h: float
    Tprime: float
    fit_residual: float
    meta: dict = field(default_factory=dict)


@dataclass
class RayData:
    """Pointwise logarithmic ray-transform samples from one probe.

    values[i] is valid only where valid[i]; missing points (|chi| below
    floor or vanishing amplitude) are never filled in here.
    imag_defect holds the imaginary part of the log ratio, which should
    vanish for exact data since the transport coefficient F is real.
    """

    values: np.ndarray
    imag_defect: np.ndarray
    valid: np.ndarray
    r: np.ndarray
    meta: dict = field(default_factory=dict)


# ----------------------------------------------------------------------
# demodulation


def demodulate(slc: TimeSliceMeasurement, W: LightVector,
               h: Optional[float] = None) -> ExtractedAmplitude:
    """Extract the order-h oscillatory coefficient from a time slice.

    Multiplies by e^{-i psi/h} (psi = Tprime + r along the last axis),
    removes everything at or above half the carrier frequency with a
    sharp FFT mask, and divides by h.  The plane-wave background lands
    at -1/h after demodulation and is filtered out even when it is not
    subtracted explicitly.
    """
    if W.sign != -1:
        raise ConfigError("demodulate: carrier W must have sign -1")
    h = float(h if h is not None else slc.h)
    if abs(h - slc.h) > 1e-12 * h:
        raise ConfigError("demodulate: h disagrees with the measurement")
    ppw = 2.0 * np.pi * h / slc.dr
    if ppw < PPW_MIN - 1e-9:
        raise UnresolvedCarrierError(
            f"demodulate: {ppw:.1f} samples per carrier wavelength "
            f"(need >= {PPW_MIN}); refine the slice or increase h")

    if slc.background is not None:
        w = slc.u - slc.background
    else:
        # phi_V is constant along r in the probe geometry; removing the
        # row mean kills its finite-window leakage into the kept band
        w = slc.u - np.mean(slc.u, axis=-1, keepdims=True)
    psi = slc.Tprime + slc.r
    d = w * np.exp(-1j * psi / h)
    spec = np.fft.fft(d, axis=-1)
    freq = np.fft.fftfreq(slc.r.size, d=slc.dr)
    keep = np.abs(freq) <= 0.5 / (2.0 * np.pi * h)
    total = float(np.sum(np.abs(spec) ** 2))
    removed = float(np.sum(np.abs(spec[..., ~keep]) ** 2))
    low = np.fft.ifft(np.where(keep, spec, 0.0), axis=-1)
    fit = np.sqrt(removed / total) if total > 0 else 0.0
    return ExtractedAmplitude(low / h, slc.r, h, slc.Tprime, fit,
                              dict(slc.meta))


def richardson_extract(amp_h: ExtractedAmplitude,
                       amp_half: ExtractedAmplitude) -> ExtractedAmplitude:
    """Cancel the O(h) contamination using extractions at h and h/2.

    The extracted amplitude satisfies Ahat(h) = A_{1,0} + h C + O(h^2)
    (the C term collects A_{m,1} leakage), so 2 Ahat(h/2) - Ahat(h)
    removes the linear term.
    """
    if abs(amp_half.h - 0.5 * amp_h.h) > 1e-12 * amp_h.h:
        raise ConfigError("richardson_extract: need amplitudes at h, h/2")
    if amp_half.r.size != amp_h.r.size or \
            np.max(np.abs(amp_half.r - amp_h.r)) > 1e-12:
        raise ConfigError("richardson_extract: r axes differ")
    meta = dict(amp_h.meta)
    meta["richardson"] = True
    return ExtractedAmplitude(2.0 * amp_half.values - amp_h.values,
                              amp_h.r, amp_h.h, amp_h.Tprime,
                              max(amp_h.fit_residual, amp_half.fit_residual),
                              meta)


def backpropagate_amplitude(amp: ExtractedAmplitude, offsets,
                            distance: float) -> ExtractedAmplitude:
    """Undo transverse Fresnel diffraction accumulated over `distance`.

    Between the scatterer and the measurement slice the demodulated
    amplitude obeys the paraxial limit of the wave equation (box u = 0
    with u = A e^{i psi/h} gives the transport of A a Lap_perp A
    correction at order h), so a slice at distance L carries the phase
    e^{+i h L k_s^2 / 2} on each transverse mode k_s.  Left
    uncorrected this rings at the Fresnel scale sqrt(h L) and dominates
    the recovery error of full-wave measurements; closed-form ansatz
    amplitudes are eikonal (diffraction-free) and must not be corrected.
    The first axis of `amp.values` must be the uniform offsets axis.
    """
    offsets = np.asarray(offsets, dtype=float)
    if amp.values.shape[0] != offsets.size or offsets.size < 2:
        raise ConfigError("backpropagate_amplitude: offsets axis mismatch")
    ds = offsets[1] - offsets[0]
    ks = 2.0 * np.pi * np.fft.fftfreq(offsets.size, ds)
    phase = np.exp(-1j * 0.5 * amp.h * float(distance) * ks ** 2)
    vals = np.fft.ifft(np.fft.fft(amp.values, axis=0) * phase[:, None],
                       axis=0)
    meta = dict(amp.meta)
    meta["backpropagated"] = float(distance)
    return ExtractedAmplitude(vals, amp.r, amp.h, amp.Tprime,
                              amp.fit_residual, meta)


# ----------------------------------------------------------------------
# logarithmic ray data


def log_recover_ray_data(amp: ExtractedAmplitude, chi: Profile,
                         A: float, B: float,
                         chi_floor: Optional[float] = None) -> RayData:
    """Ray-transform samples log(2 amp / (chi (A - iB))), real part.

    Points where |chi(psi)| falls below the floor (default 10% of the
    window maximum) are marked missing rather than extrapolated.  The
    imaginary part of the log ratio is returned as a consistency
    diagnostic; it vanishes for exact data because F is real.
    """
    coeff = 0.5 * (A - 1j * B)
    if coeff == 0:
        raise ConfigError("log_recover_ray_data: pulse amplitude is zero")
    chiv = chi.f(amp.Tprime + amp.r)
    peak = float(np.max(np.abs(chiv)))
    if peak == 0.0:
        raise ConfigError("log_recover_ray_data: chi vanishes on the "
                          "whole measurement window")
    floor = 0.1 * peak if chi_floor is None else float(chi_floor)
    denom = chiv * coeff
    valid = np.broadcast_to(np.abs(chiv) >= floor, amp.values.shape).copy()
    ratio = np.ones_like(amp.values)
    np.divide(amp.values, denom, out=ratio, where=valid)
    valid &= np.abs(ratio) > 1e-300
    logr = np.log(np.where(valid, ratio, 1.0))
    return RayData(logr.real, logr.imag, valid, amp.r, dict(amp.meta))


# ----------------------------------------------------------------------
# probe sweep geometry


@dataclass(frozen=True)
class Probe:
    """One direction of the sweep: angle, light vectors, measurement."""

    angle: float
    V: LightVector
    W: LightVector
    weight: float            # phi'(0) * <Vt,Wt>_M from the X-ray reduction
    slc: TimeSliceMeasurement
    slc_half: Optional[TimeSliceMeasurement] = None


def _sweep_vectors(angle: float):
    """omega, theta = omega-perp, and the probe light vectors (pairing -1).

    sign(V) = -1 makes the background/probe interaction dissipative: the
    linearization of the null form around phi_V carries a first-order
    term -2 q phi' sign(V) d_t, and the +1 choice feeds a finite-time
    blow-up of the full solve for O(1) potentials.
    """
    om = np.array([np.cos(angle), np.sin(angle)])
    th = np.array([-om[1], om[0]])
    return om, th, LightVector(-1, tuple(th)), LightVector(-1, tuple(om))


def _r_window(chi: Profile, Tprime: float, h: float, ppw: int, pad: float):
    """Uniform r axis covering the pulse band at time Tprime."""
    half = chi.support_radius + pad
    dr = 2.0 * np.pi * h / ppw
    n = 2 * int(np.ceil(half / dr)) + 1
    return -Tprime + dr * (np.arange(n) - (n - 1) // 2)


def ansatz_measurements(q: Potential, phi: Profile, chi: Profile,
                        A: float, B: float, h: float,
                        offsets, angles, Tprime: float,
                        ppw: int = 20, pad: float = 0.15,
                        richardson: bool = False):
    """Synthetic slices u = phi_V + 2h Re(A_{1,0} e^{i psi/h}) per angle.

    Uses the closed-form leading amplitude (adaptive ray quadrature).
    In the reduced configuration the ray exponent is constant across
    the measurement band once the pulse has fully crossed supp q, so
    A_{1,0}(s, r) = A_{1,0}(s, -Tprime) chi(Tprime + r) / chi(0); the
    quadrature runs once per offset instead of once per band point.
    """
    offsets = np.asarray(offsets, dtype=float)
    chi0 = float(chi.f(0.0))
    if chi0 == 0.0:
        raise ConfigError("ansatz_measurements: chi must not vanish at "
                          "the band center")
    # a shared r grid must resolve the finest carrier in play
    h_fine = 0.5 * h if richardson else h
    probes = []
    for a in np.asarray(angles, dtype=float):
        om, th, V, W = _sweep_vectors(float(a))
        red = xray_reduce(q, phi, V, W)  # validates the reduced config
        r = _r_window(chi, Tprime, h_fine, ppw, pad)
        if -Tprime + chi.support_radius + pad >= -(om @ np.asarray(q.center)
                                                   + q.R):
            raise ConfigError("ansatz_measurements: band overlaps supp q "
                              "at Tprime; increase Tprime")
        ctr = offsets[:, None] * th - Tprime * om
        a_ctr = a10_points(q, phi, chi, V, W, A, B, Tprime, ctr)
        psi = Tprime + r
        amp = a_ctr[:, None] * (chi.f(psi) / chi0)[None, :]
        # phi_V is constant along r: s = -Tprime sign(V) + theta.x'
        bg = np.broadcast_to(phi.f(-Tprime * V.sign + offsets)[:, None],
                             amp.shape).copy()

        def slice_at(hh, ampl):
            osc = 2.0 * hh * np.real(ampl * np.exp(1j * psi / hh))
            return TimeSliceMeasurement(bg + osc, r, hh, Tprime, bg,
                                        {"angle": float(a),
                                         "offsets": offsets.copy()})

        half = slice_at(0.5 * h, amp) if richardson else None
        probes.append(Probe(float(a), V, W, red.weight, slice_at(h, amp),
                            half))
    return probes


def _assert_radial(q: Potential):
    """Reject potentials whose spatial factor is not rotation invariant."""
    if q.time_radius is not None or q.u_degree != 0:
        raise ConfigError("fdtd_measurements: need a time-independent, "
                          "u-independent potential")
    if np.max(np.abs(np.asarray(q.center))) > 1e-14:
        raise ConfigError("fdtd_measurements: potential must be centered "
                          "at the origin for the rotational reduction")
    rho = np.array([0.1, 0.25, 0.4, 0.45])
    base = q.q(0.0, [rho, np.zeros_like(rho)], 0.0)
    for ang in (0.7, 1.9, 2.6, 4.4):
        rot = q.q(0.0, [rho * np.cos(ang), rho * np.sin(ang)], 0.0)
        if np.max(np.abs(rot - base)) > 1e-12 * max(1.0, np.max(np.abs(base))):
            raise ConfigError("fdtd_measurements: potential is not "
                              "radially symmetric")


def fdtd_measurements(q: Potential, phi: Profile, chi: Profile,
                      A: float, B: float, h: float,
                      offsets, angles, Tprime: float, T0: float,
                      ppw: int = PPW_MIN, pad: float = 0.15):
    """Slices from one full semilinear solve, replicated over the sweep.

    Requires a radially symmetric (time- and u-independent) potential:
    rotating the probe direction then rotates the exact solution with
    it, so every angle's slice equals the canonical omega = (1,0) slice.
    This is an exact symmetry of the continuum problem, checked on q
    numerically, and avoids one large 2+1D solve per direction.
    """
    _assert_radial(q)
    offsets = np.asarray(offsets, dtype=float)
    angles = np.asarray(angles, dtype=float)
    if Tprime - chi.support_radius <= q.R:
        raise ConfigError("fdtd_measurements: Tprime too small; pulse has "
                          "not fully crossed supp q")
    if -T0 - chi.support_radius <= q.R:
        raise ConfigError("fdtd_measurements: T0 too late; pulse overlaps "
                          "supp q at the initial time")

    _, _, V0, W0 = _sweep_vectors(0.0)
    red = xray_reduce(q, phi, V0, W0)
    d = 2.0 * np.pi * h / ppw
    span = Tprime - T0
    band = chi.support_radius + pad
    # x1 runs along omega; left edge far enough that boundary garbage
    # (phi_V is nonzero there) cannot reach the sampled band by Tprime
    x1_lo = -Tprime - band - span - 6 * d
    x1_hi = -T0 + band + 6 * d
    # x2 edges sit outside the phi_V slab |t + x2| < support (sign V = -1)
    x2_hi = -T0 + phi.support_radius + 6 * d
    x2_lo = -Tprime - phi.support_radius - 6 * d
    if np.max(offsets) + 2 * d > x2_hi or np.min(offsets) - 2 * d < x2_lo:
        raise ConfigError("fdtd_measurements: offsets outside the box")
    n1 = int(np.ceil((x1_hi - x1_lo) / d)) + 1
    n2 = int(np.ceil((x2_hi - x2_lo) / d)) + 1
    x1 = x1_lo + d * np.arange(n1)
    x2 = x2_lo + d * np.arange(n2)

    spec = AnsatzSpec(V0, W0, phi, chi, A, B, 0, (h,), T0, Tprime + 1.0,
                      Tprime, d, ((x1_lo, x1_hi), (x2_lo, x2_hi)))
    spec.validate_against(q)
    xs = (x1[:, None], x2[None, :])
    u0 = u_incident(spec, h, T0, xs)
    v0 = dt_u_incident(spec, h, T0, xs)
    traj = solve_semilinear(q, u0, v0, (x1_lo, x2_lo), (d, d), T0, Tprime,
                            scheme="rk4", sample_every=10 ** 9)
    uT = traj.u[-1]

    r = _r_window(chi, Tprime, h, ppw, pad)
    ir = np.clip(np.round((r - x1_lo) / d).astype(int), 0, n1 - 1)
    r = x1[ir]  # snap to solver columns; spacing preserved (same grid)
    # linear interpolation across x2 onto the requested offsets
    pos = (offsets - x2_lo) / d
    j = np.clip(pos.astype(int), 0, n2 - 2)
    wts = pos - j
    rows = (1.0 - wts)[:, None] * uT[ir, :].T[j, :] \
        + wts[:, None] * uT[ir, :].T[j + 1, :]
    bg = np.broadcast_to(phi.f(-Tprime * V0.sign + offsets)[:, None],
                         rows.shape).copy()
    canonical = TimeSliceMeasurement(rows, r, h, Tprime, bg,
                                     {"provider": "fdtd",
                                      "offsets": offsets.copy(),
                                      # pulse band crosses the scatterer
                                      # plane omega.x = 0 at t = 0
                                      "backpropagate": Tprime})
    probes = []
    for a in angles:
        _, _, V, W = _sweep_vectors(float(a))
        probes.append(Probe(float(a), V, W, red.weight, canonical))
    return probes


# ----------------------------------------------------------------------
# full 2-D recovery


def recover_potential_2d(probes, axes, method: str = "fbp",
                         reg: float = 1e-8, truth=None,
                         chi: Optional[Profile] = None,
                         A: float = 1.0, B: float = 0.5,
                         max_missing: float = 0.3):
    """Reconstruct the spatial factor of q from a probe sweep.

    Each probe is demodulated (with the two-h Richardson step when a
    half-wavelength slice is attached), turned into logarithmic ray
    data, averaged over the valid band points per offset, divided by
    the reduction weight, and assembled into a sinogram which is then
    inverted.  Angles with more than `max_missing` missing offsets are
    dropped with a warning; isolated missing offsets are interpolated
    from their neighbours and counted in the report.

    Returns (Reconstruction, report dict).
    """
    if chi is None:
        raise ConfigError("recover_potential_2d: need the pulse profile chi")
    probes = list(probes)
    if len(probes) < 90:
        raise ConfigError(f"recover_potential_2d: {len(probes)} probe "
                          "directions; the sweep needs >= 90")
    angles = np.array([p.angle for p in probes])
    if np.any(np.diff(angles) <= 0):
        raise ConfigError("recover_potential_2d: probe angles must be "
                          "strictly increasing")

    offsets = None
    columns, kept, dropped = [], [], []
    interpolated = 0
    imag_defect = 0.0
    fit_residual = 0.0
    for p in probes:
        if offsets is None:
            offsets = p.slc.meta.get("offsets")
        amp = demodulate(p.slc, p.W)
        if p.slc_half is not None:
            amp = richardson_extract(amp, demodulate(p.slc_half, p.W))
        dist = p.slc.meta.get("backpropagate")
        if dist is not None:
            amp = backpropagate_amplitude(amp, p.slc.meta["offsets"], dist)
        fit_residual = max(fit_residual, amp.fit_residual)
        ray = log_recover_ray_data(amp, chi, A, B)
        have = np.any(ray.valid, axis=-1)
        if np.mean(~have) > max_missing:
            dropped.append(p.angle)
            continue
        # chi^2-weighted band average: points near the band centre carry
        # the cleanest amplitude (division by chi amplifies edge noise)
        wts = chi.f(p.slc.Tprime + ray.r) ** 2
        col = np.zeros(ray.values.shape[0])
        for i in np.nonzero(have)[0]:
            v = ray.valid[i]
            col[i] = float(np.sum(wts[v] * ray.values[i, v])
                           / np.sum(wts[v]))
        if np.any(ray.valid):
            imag_defect = max(imag_defect,
                              float(np.max(np.abs(ray.imag_defect[ray.valid]))))
        if not np.all(have):
            idx = np.arange(col.size)
            col[~have] = np.interp(idx[~have], idx[have], col[have])
            interpolated += int(np.sum(~have))
        if abs(p.weight) < 1e-14:
            raise ConfigError("recover_potential_2d: degenerate probe "
                              "weight")
        columns.append(col / p.weight)
        kept.append(p.angle)
    if dropped:
        warnings.warn(f"recover_potential_2d: dropped {len(dropped)} "
                      "angles with too many missing samples")
    if not columns:
        raise ConfigError("recover_potential_2d: every angle was dropped")
    if offsets is None:
        raise ConfigError("recover_potential_2d: probe slices carry no "
                          "'offsets' metadata")
    sino = Sinogram(np.asarray(offsets, dtype=float), np.array(kept),
                    np.stack(columns, axis=-1))
    rec = invert_xray_2d(sino, axes, method=method, reg=reg, truth=truth)
    report = {
        "n_angles": len(probes),
        "n_angles_used": len(kept),
        "dropped_angles": dropped,
        "interpolated_offsets": interpolated,
        "imag_defect_max": imag_defect,
        "fit_residual_max": fit_residual,
        "method": rec.method,
        "rel_l2_error": rec.rel_l2_error,
    }
    return rec, report
