"""Light-ray transform, X-ray reduction, FBP/RLS inversion."""

import numpy as np
import pytest

from nullform.errors import ConfigError
from nullform.minkowski import LightVector
from nullform.potential import VectorFieldF, get_potential
from nullform.profiles import ramp
from nullform.raytransform import (
    Reconstruction, Sinogram, _adjoint_apply, _forward_apply, _ray_samples,
    invert_xray_2d, lightray_forward, xray_forward_2d, xray_reduce,
)

PHI = ramp(1.5, 0.5, 1.0)
W0 = LightVector(-1, (1.0, 0.0))


def _field(key="radial_bump", theta=(0.0, 1.0), amplitude=None):
    q = get_potential(key, 2, amplitude=amplitude)
    return VectorFieldF(q, PHI, LightVector(1, theta))


def _phantom_integrand(q):
    def f(x1, x2):
        return q.q(0.0, [np.asarray(x1, float), np.asarray(x2, float)], 0.0)
    return f


# ----------------------------------------------------------------------
# forward transform


def test_zero_potential_zero_sinogram():
    fld = _field("zero")
    sino = lightray_forward(fld, fld.V, W0, np.linspace(-1, 1, 11),
                            np.linspace(0, np.pi, 8, endpoint=False))
    assert np.all(sino.samples == 0.0)


def test_rays_missing_support_vanish():
    fld = _field()  # supp q = ball of radius 0.5
    sino = lightray_forward(fld, fld.V, W0, np.array([-0.9, 0.7, 1.5]),
                            np.linspace(0, np.pi, 12, endpoint=False))
    assert np.max(np.abs(sino.samples)) == 0.0


def test_axis_ray_matches_dense_quadrature():
    # oracle: Simpson at 10x the node density of the adaptive pass
    from scipy.integrate import simpson
    fld = _field()
    offsets = np.array([0.0, 0.15, -0.3])
    sino = lightray_forward(fld, fld.V, W0, offsets, np.array([0.0]))
    for i, s in enumerate(offsets):
        nu = np.linspace(-0.6, 0.6, 20001)
        # ray (nu, nu, s): t = nu, x1 = nu, x2 = s; pairing = 1 + 0
        vals = fld.scalar_prefactor(nu, [nu, np.full_like(nu, s)])
        assert sino.samples[i, 0] == pytest.approx(
            simpson(vals, x=nu), abs=1e-8)


def test_forward_linearity_in_amplitude():
    offsets = np.linspace(-0.5, 0.5, 9)
    angles = np.linspace(0, np.pi, 6, endpoint=False)
    a = lightray_forward(_field(), LightVector(1, (0.0, 1.0)), W0,
                         offsets, angles)
    b = lightray_forward(_field(amplitude=3.0), LightVector(1, (0.0, 1.0)),
                         W0, offsets, angles)
    assert np.allclose(b.samples, 3.0 * a.samples, atol=1e-10)


def test_forward_rejects_bad_args():
    fld = _field()
    with pytest.raises(ConfigError):
        lightray_forward(fld, fld.V, LightVector(1, (1.0, 0.0)),
                         np.zeros(3), np.zeros(2))
    with pytest.raises(ConfigError):
        lightray_forward(fld, LightVector(-1, (0.0, 1.0)), W0,
                         np.zeros(3), np.zeros(2))


# ----------------------------------------------------------------------
# X-ray reduction


def test_reduce_weight_by_hand():
    # V = (+1,(0,1)), omega = (1,0): <Vt,Wt>_M = 1, phi'(0) = 1
    q = get_potential("radial_bump", 2)
    red = xray_reduce(q, PHI, LightVector(1, (0.0, 1.0)), W0)
    assert red.weight == pytest.approx(1.0)
    assert red(0.0, 0.0) == pytest.approx(q.q(0.0, [0.0, 0.0], 0.0))


def test_reduce_rejections():
    with pytest.raises(ConfigError):  # time-dependent
        xray_reduce(get_potential("bump_t_xy", 2), PHI,
                    LightVector(1, (0.0, 1.0)), W0)
    with pytest.raises(ConfigError):  # u-dependent
        xray_reduce(get_potential("bump_linear_u", 2), PHI,
                    LightVector(1, (0.0, 1.0)), W0)
    with pytest.raises(ConfigError):  # theta not perpendicular to omega
        xray_reduce(get_potential("radial_bump", 2), PHI,
                    LightVector(1, (1.0, 0.0)), W0)


def test_reduced_xray_matches_lightray():
    # per-angle V with theta = omega-perp keeps the reduced configuration
    q = get_potential("radial_bump", 2)
    offsets = np.linspace(-0.6, 0.6, 13)
    for a in (0.0, 0.7, 2.0):
        om = (np.cos(a), np.sin(a))
        th = (-np.sin(a), np.cos(a))
        V = LightVector(1, th)
        W = LightVector(-1, om)
        red = xray_reduce(q, PHI, V, W)
        lray = lightray_forward(VectorFieldF(q, PHI, V), V, W0, offsets,
                                np.array([a]))
        xray = xray_forward_2d(red, offsets, np.array([a]), q.center, q.R)
        scale = np.max(np.abs(xray.samples))
        assert np.max(np.abs(lray.samples - xray.samples)) < 1e-6 * scale


# ----------------------------------------------------------------------
# sinogram serialization


def test_sinogram_csv_roundtrip():
    sino = Sinogram(np.linspace(-1, 1, 5), np.linspace(0, np.pi, 4,
                                                       endpoint=False),
                    np.arange(20.0).reshape(5, 4))
    back = Sinogram.from_csv(sino.to_csv())
    assert np.array_equal(back.offsets, sino.offsets)
    assert np.array_equal(back.angles, sino.angles)
    assert np.array_equal(back.samples, sino.samples)


# ----------------------------------------------------------------------
# inversion


def test_zero_sinogram_zero_reconstruction():
    sino = Sinogram(np.linspace(-1, 1, 32),
                    np.linspace(0, np.pi, 100, endpoint=False),
                    np.zeros((32, 100)))
    ax = np.linspace(-1, 1, 33)
    rec = invert_xray_2d(sino, (ax, ax))
    assert np.all(rec.values == 0.0)


def test_fbp_phantom_accuracy():
    q = get_potential("radial_bump", 2)
    offsets = np.linspace(-0.8, 0.8, 161)
    angles = np.linspace(0, np.pi, 180, endpoint=False)
    sino = xray_forward_2d(_phantom_integrand(q), offsets, angles,
                           q.center, q.R)
    ax = np.linspace(-0.8, 0.8, 161)
    truth = _phantom_integrand(q)(ax[:, None], ax[None, :])
    rec = invert_xray_2d(sino, (ax, ax), method="fbp", truth=truth)
    assert rec.rel_l2_error < 0.05


def test_rls_approaches_fbp():
    q = get_potential("radial_bump", 2)
    offsets = np.linspace(-0.8, 0.8, 81)
    angles = np.linspace(0, np.pi, 100, endpoint=False)
    sino = xray_forward_2d(_phantom_integrand(q), offsets, angles,
                           q.center, q.R)
    ax = np.linspace(-0.8, 0.8, 81)
    fbp = invert_xray_2d(sino, (ax, ax), method="fbp")
    rls = invert_xray_2d(sino, (ax, ax), method="rls", reg=1e-8)
    rel = np.sqrt(np.sum((fbp.values - rls.values) ** 2)
                  / np.sum(fbp.values ** 2))
    assert rel < 0.02


def test_fbp_angle_fallback_warns():
    sino = Sinogram(np.linspace(-1, 1, 17),
                    np.linspace(0, np.pi, 10, endpoint=False),
                    np.ones((17, 10)))
    ax = np.linspace(-1, 1, 9)
    with pytest.warns(UserWarning):
        rec = invert_xray_2d(sino, (ax, ax), method="fbp")
    assert rec.method == "rls"


def test_angle_doubling_non_increasing_error():
    q = get_potential("radial_bump", 2)
    offsets = np.linspace(-0.8, 0.8, 81)
    ax = np.linspace(-0.8, 0.8, 81)
    truth = _phantom_integrand(q)(ax[:, None], ax[None, :])
    errs = []
    for n_ang in (45, 90, 180):
        angles = np.linspace(0, np.pi, n_ang, endpoint=False)
        sino = xray_forward_2d(_phantom_integrand(q), offsets, angles,
                               q.center, q.R)
        rec = invert_xray_2d(sino, (ax, ax), method="rls", reg=1e-8,
                             truth=truth)
        errs.append(rec.rel_l2_error)
    assert errs[0] >= errs[1] >= errs[2]


def test_discrete_operator_adjointness():
    rng = np.random.default_rng(7)
    ax = (np.linspace(-1, 1, 21), np.linspace(-1, 1, 19))
    sino = Sinogram(np.linspace(-1, 1, 15),
                    np.linspace(0, np.pi, 12, endpoint=False),
                    np.zeros((15, 12)))
    geom = _ray_samples(sino, ax)
    x = rng.standard_normal((21, 19))
    y = rng.standard_normal((15, 12))
    ax_y = _forward_apply(x, y.shape, sino, ax, geom)
    at_y = _adjoint_apply(y, x.shape, sino, ax, geom)
    lhs = float(np.sum(ax_y * y))
    rhs = float(np.sum(x * at_y))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_pgm_preview():
    rec = Reconstruction((np.arange(3.0), np.arange(2.0)),
                         np.array([[0.0, 1.0], [0.5, 0.25], [1.0, 0.0]]),
                         "fbp")
    pgm = rec.to_pgm()
    lines = pgm.strip().split("\n")
    assert lines[0] == "P2"
    assert lines[1] == "3 2"
    assert lines[2] == "255"
