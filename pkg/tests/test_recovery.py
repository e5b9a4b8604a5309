"""Time-slice demodulation, log ray data, and 2-D potential recovery."""

import numpy as np
import pytest

from nullform.errors import ConfigError, UnresolvedCarrierError
from nullform.geoptics import AnsatzSpec, assemble_uN, background_field, \
    build_hierarchy
from nullform.minkowski import LightVector
from nullform.potential import get_potential
from nullform.profiles import bump, ramp
from nullform.recovery import (
    ExtractedAmplitude, TimeSliceMeasurement, ansatz_measurements,
    backpropagate_amplitude, demodulate, fdtd_measurements,
    log_recover_ray_data, recover_potential_2d, richardson_extract,
)

PHI = ramp(1.5, 0.5, 1.0)
CHI = bump(0.3, 1.0)
A, B = 1.0, 0.5
TP = 1.5
W1 = LightVector(-1, (1.0,))


def _q0_slice(h, chi=CHI, bg_value=0.8, with_bg=True, ppw=20):
    dr = 2 * np.pi * h / ppw
    half = int(np.ceil((chi.support_radius + 0.2) / dr))
    r = -TP + dr * (np.arange(2 * half + 1) - half)
    psi = TP + r
    u = bg_value + h * chi.f(psi) * (A * np.cos(psi / h)
                                     + B * np.sin(psi / h))
    bg = np.full((1, r.size), bg_value) if with_bg else None
    return TimeSliceMeasurement(u[None, :], r, h, TP, bg), psi


# ----------------------------------------------------------------------
# demodulation


def test_demodulate_recovers_pulse_coefficient():
    chi = bump(0.5, 1.0)
    slc, psi = _q0_slice(1 / 64, chi=chi)
    amp = demodulate(slc, W1)
    exact = 0.5 * (A - 1j * B) * chi.f(psi)
    assert np.max(np.abs(amp.values[0] - exact)) < 2e-2


def test_demodulate_background_only_is_zero():
    dr = 2 * np.pi / 64 / 20
    r = -TP + dr * (np.arange(101) - 50)
    bg = np.full((1, r.size), 1.3)
    slc = TimeSliceMeasurement(bg.copy(), r, 1 / 64, TP, bg)
    amp = demodulate(slc, W1)
    assert np.max(np.abs(amp.values)) < 1e-10


def test_demodulate_mean_subtraction_matches_explicit_background():
    got, _ = _q0_slice(1 / 32, with_bg=True)
    auto, _ = _q0_slice(1 / 32, with_bg=False)
    a = demodulate(got, W1)
    b = demodulate(auto, W1)
    assert np.max(np.abs(a.values - b.values)) < 5e-3


def test_demodulate_unresolved_carrier_rejected():
    slc, _ = _q0_slice(1 / 32, ppw=8)
    with pytest.raises(UnresolvedCarrierError):
        demodulate(slc, W1)


def test_demodulate_argument_validation():
    slc, _ = _q0_slice(1 / 32)
    with pytest.raises(ConfigError):
        demodulate(slc, LightVector(1, (1.0,)))  # wrong carrier sign
    with pytest.raises(ConfigError):
        demodulate(slc, W1, h=1 / 16)  # h disagrees with the slice


# ----------------------------------------------------------------------
# Richardson pairing


def _amp(values, r, h):
    return ExtractedAmplitude(values, r, h, TP, 0.0)


def test_richardson_weights_cancel_linear_term():
    r = np.linspace(-0.4, 0.4, 81) - TP
    a10 = np.exp(1j * r) * CHI.f(TP + r)
    c = (0.7 - 0.2j) * np.sin(3 * r)
    h = 1 / 32
    rich = richardson_extract(_amp((a10 + h * c)[None, :], r, h),
                              _amp((a10 + 0.5 * h * c)[None, :], r, h / 2))
    assert np.max(np.abs(rich.values[0] - a10)) < 1e-14
    assert rich.meta.get("richardson") is True


def test_richardson_requires_halved_h():
    r = np.linspace(-0.4, 0.4, 11)
    a = _amp(np.zeros((1, 11), dtype=complex), r, 1 / 16)
    with pytest.raises(ConfigError):
        richardson_extract(a, _amp(a.values, r, 1 / 24))


def test_richardson_improves_demodulated_extraction():
    chi = bump(0.5, 1.0)
    h = 1 / 64
    dr = 2 * np.pi * (h / 2) / 20
    half = int(np.ceil(0.65 / dr))
    r = -TP + dr * (np.arange(2 * half + 1) - half)
    psi = TP + r
    a10 = 0.5 * (A - 1j * B) * chi.f(psi) * np.exp(-0.4 * np.cos(1.7 * r))
    cont = (1.2 - 0.9 * np.sin(2.1 * r)) * chi.f(psi)

    def slc(hh):
        u = 2 * np.real((hh * a10 + hh * hh * cont) * np.exp(1j * psi / hh))
        return TimeSliceMeasurement(u[None, :], r, hh, TP)

    plain = demodulate(slc(h), W1)
    rich = richardson_extract(plain, demodulate(slc(h / 2), W1))
    band = np.abs(chi.f(psi)) > 0.3
    ep = np.max(np.abs(plain.values[0] - a10)[band])
    er = np.max(np.abs(rich.values[0] - a10)[band])
    assert er < 0.5 * ep


# ----------------------------------------------------------------------
# logarithmic ray data


def test_log_recover_zero_potential():
    r = np.linspace(-0.45, 0.45, 181) - TP
    chiv = CHI.f(TP + r)
    amp = _amp((0.5 * (A - 1j * B) * chiv)[None, :], r, 1 / 32)
    ray = log_recover_ray_data(amp, CHI, A, B)
    assert np.any(ray.valid)
    assert np.max(np.abs(ray.values[ray.valid])) < 1e-12
    assert np.max(np.abs(ray.imag_defect[ray.valid])) < 1e-12


def test_log_recover_floor_masks_band_edges():
    r = np.linspace(-0.45, 0.45, 181) - TP
    chiv = CHI.f(TP + r)
    amp = _amp((0.5 * (A - 1j * B) * chiv)[None, :], r, 1 / 32)
    ray = log_recover_ray_data(amp, CHI, A, B)
    small = np.abs(chiv) < 0.1 * np.max(np.abs(chiv))
    assert not np.any(ray.valid[0][small])


def test_log_recover_missing_samples_never_fabricated():
    r = np.linspace(-0.45, 0.45, 181) - TP
    amp = _amp(np.zeros((1, r.size), dtype=complex), r, 1 / 32)
    ray = log_recover_ray_data(amp, CHI, A, B)
    assert not np.any(ray.valid)


def test_log_recover_rejects_zero_pulse():
    r = np.linspace(-0.45, 0.45, 21) - TP
    amp = _amp(np.ones((1, r.size), dtype=complex), r, 1 / 32)
    with pytest.raises(ConfigError):
        log_recover_ray_data(amp, CHI, 0.0, 0.0)


def test_probe_invariance_under_amplitude_scaling():
    # (A, B) -> (cA, cB) cancels in the ratio inside the log
    r = np.linspace(-0.45, 0.45, 181) - TP
    chiv = CHI.f(TP + r)
    envelope = np.exp(-0.3 + 0.2 * np.sin(2 * r))
    for c in (3.0, -0.7):
        amp1 = _amp((0.5 * (A - 1j * B) * chiv * envelope)[None, :],
                    r, 1 / 32)
        amp2 = _amp(c * amp1.values, r, 1 / 32)
        ray1 = log_recover_ray_data(amp1, CHI, A, B)
        ray2 = log_recover_ray_data(amp2, CHI, c * A, c * B)
        assert np.array_equal(ray1.valid, ray2.valid)
        d = np.max(np.abs(ray1.values[ray1.valid] - ray2.values[ray2.valid]))
        assert d < 1e-12


# ----------------------------------------------------------------------
# diffraction backpropagation


def test_backpropagate_roundtrip():
    rng = np.random.default_rng(3)
    offsets = np.linspace(-0.8, 0.8, 33)
    r = np.linspace(-0.3, 0.3, 21) - TP
    vals = rng.standard_normal((33, 21)) + 1j * rng.standard_normal((33, 21))
    h, L = 1 / 32, 1.2
    ks = 2 * np.pi * np.fft.fftfreq(33, offsets[1] - offsets[0])
    blurred = np.fft.ifft(np.fft.fft(vals, axis=0)
                          * np.exp(1j * 0.5 * h * L * ks ** 2)[:, None],
                          axis=0)
    amp = backpropagate_amplitude(_amp(blurred, r, h), offsets, L)
    assert np.max(np.abs(amp.values - vals)) < 1e-12
    assert amp.meta["backpropagated"] == L


# ----------------------------------------------------------------------
# measurement providers


def test_ansatz_provider_zero_potential_slice():
    q = get_potential("zero", 2)
    offsets = np.linspace(-0.5, 0.5, 5)
    probes = ansatz_measurements(q, PHI, CHI, A, B, 1 / 32, offsets,
                                 [0.0, 0.5], TP)
    assert len(probes) == 2
    p = probes[0]
    assert p.weight == pytest.approx(-1.0)  # phi'(0) * (sign V + theta.omega)
    psi = TP + p.slc.r
    expect = p.slc.background + (1 / 32) * CHI.f(psi) * (
        A * np.cos(psi * 32) + B * np.sin(psi * 32))
    assert np.max(np.abs(p.slc.u - expect)) < 1e-12


def test_ansatz_provider_rejects_unreduced_config():
    offsets = np.linspace(-0.5, 0.5, 5)
    with pytest.raises(ConfigError):  # time-dependent potential
        ansatz_measurements(get_potential("bump_t_xy", 2), PHI, CHI, A, B,
                            1 / 32, offsets, [0.0], TP)
    with pytest.raises(ConfigError):  # band still inside supp q
        ansatz_measurements(get_potential("radial_bump", 2), PHI, CHI, A, B,
                            1 / 32, offsets, [0.0], 0.6)


def test_fdtd_provider_validations():
    offsets = np.linspace(-0.5, 0.5, 5)
    angles = np.linspace(0, np.pi, 90, endpoint=False)
    with pytest.raises(ConfigError):  # not centered at the origin
        fdtd_measurements(get_potential("offset_bump", 2), PHI, CHI, A, B,
                          1 / 16, offsets, angles, 1.2, -1.2)
    with pytest.raises(ConfigError):  # time-dependent
        fdtd_measurements(get_potential("bump_t_xy", 2), PHI, CHI, A, B,
                          1 / 16, offsets, angles, 1.2, -1.2)
    with pytest.raises(ConfigError):  # pulse has not crossed supp q
        fdtd_measurements(get_potential("radial_bump", 2), PHI, CHI, A, B,
                          1 / 16, offsets, angles, 0.7, -1.2)


# ----------------------------------------------------------------------
# full recovery


def test_recover_requires_probe_sweep():
    q = get_potential("radial_bump", 2)
    offsets = np.linspace(-0.8, 0.8, 9)
    probes = ansatz_measurements(q, PHI, CHI, A, B, 1 / 32, offsets,
                                 np.linspace(0, np.pi, 10, endpoint=False),
                                 TP)
    ax = np.linspace(-0.8, 0.8, 9)
    with pytest.raises(ConfigError):
        recover_potential_2d(probes, (ax, ax), chi=CHI, A=A, B=B)
    with pytest.raises(ConfigError):
        recover_potential_2d(probes, (ax, ax))  # chi missing


def test_recover_ansatz_pipeline():
    q = get_potential("radial_bump", 2)
    offsets = np.linspace(-0.8, 0.8, 49)
    angles = np.linspace(0, np.pi, 90, endpoint=False)
    probes = ansatz_measurements(q, PHI, CHI, A, B, 1 / 32, offsets,
                                 angles, TP)
    ax = np.linspace(-0.8, 0.8, 49)
    truth = q.q(0.0, [ax[:, None], ax[None, :]], 0.0)
    rec, report = recover_potential_2d(probes, (ax, ax), method="fbp",
                                       truth=truth, chi=CHI, A=A, B=B)
    assert rec.rel_l2_error < 0.08
    assert report["n_angles_used"] == 90
    assert report["dropped_angles"] == []


def test_recover_drops_dead_angle_with_warning():
    q = get_potential("radial_bump", 2)
    offsets = np.linspace(-0.8, 0.8, 33)
    angles = np.linspace(0, np.pi, 91, endpoint=False)
    probes = ansatz_measurements(q, PHI, CHI, A, B, 1 / 32, offsets,
                                 angles, TP)
    bad = probes[7]
    bad.slc.u[...] = bad.slc.background  # pulse wiped out -> all missing
    ax = np.linspace(-0.8, 0.8, 33)
    with pytest.warns(UserWarning):
        rec, report = recover_potential_2d(probes, (ax, ax), method="fbp",
                                           chi=CHI, A=A, B=B)
    assert report["n_angles_used"] == 90
    assert report["dropped_angles"] == [pytest.approx(bad.angle)]


def test_recover_fdtd_small():
    # coarse full-wave end-to-end run; the h = 1/64 version is exercised
    # by the acceptance suite
    q = get_potential("radial_bump", 2)
    offsets = np.linspace(-0.8, 0.8, 49)
    angles = np.linspace(0, np.pi, 90, endpoint=False)
    probes = fdtd_measurements(q, PHI, CHI, A, B, 1 / 16, offsets, angles,
                               1.2, -1.2)
    ax = np.linspace(-0.8, 0.8, 49)
    truth = q.q(0.0, [ax[:, None], ax[None, :]], 0.0)
    rec, report = recover_potential_2d(probes, (ax, ax), method="fbp",
                                       truth=truth, chi=CHI, A=A, B=B)
    assert rec.rel_l2_error < 0.45
    flat_r = rec.values.ravel()
    flat_t = truth.ravel()
    corr = np.corrcoef(flat_r, flat_t)[0, 1]
    assert corr > 0.85


def test_pipeline_consistency_slope():
    # demodulate(assemble_uN) returns A_{1,0} up to O(h): halving h about
    # halves the mid-band extraction error
    q1 = get_potential("radial_bump", 1)
    V1 = LightVector(-1, (-1.0,))
    spec = AnsatzSpec(V1, W1, PHI, CHI, A, B, 1, (1 / 8, 1 / 16), -2.0,
                      2.0, TP, 0.01, ((-4.0, 4.0),))
    table = build_hierarchy(spec, q1)
    grid = table.grid
    k = int(round((TP - grid.t0) / grid.dt))
    x = grid.axis(0)
    tv = float(grid.t[k])
    bg = background_field(spec, tv, [x])
    a10 = table.rows[(1, 0)][k]
    band = np.abs(CHI.f(tv + x)) > 0.3
    errs = []
    for h in spec.h_list:
        slc = TimeSliceMeasurement(assemble_uN(table, h)[k][None, :], x, h,
                                   tv, bg[None, :])
        amp = demodulate(slc, W1)
        errs.append(np.max(np.abs(amp.values[0] - a10)[band]))
    slope = np.log2(errs[0] / errs[1])
    assert slope > 0.8
