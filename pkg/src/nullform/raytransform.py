"""Light-ray transform of the rank-one field, X-ray reduction, 2-D tomography.

The forward transform integrates the covector field F(V,x) = q(x, phi_V)
phi'_V Vt along null lines nu -> (t0 + nu, x' + nu omega), paired with
Wt = (1, omega).  The pairing is the metric one, <Vt, Wt>_M = sign(V) +
theta.omega — the same factor that drives the transport hierarchy and the
closed-form amplitude exponent, so sinogram samples equal the log of the
recovered amplitude ratio by construction.

For time-independent potentials with theta perpendicular to omega and a
profile whose slope is constant over the interaction window, the line
integrals reduce to the Euclidean X-ray transform of a fixed integrand on
R^2, which is inverted here by filtered backprojection or regularized
least squares.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .constants import RAY_QUAD_ABS_TOL, RAY_QUAD_MAX_DOUBLINGS
from .errors import ConfigError, QuadratureError
from .minkowski import LightVector, mdot_vec
from .potential import Potential, VectorFieldF
from .profiles import Profile


# ----------------------------------------------------------------------
# domain types


@dataclass
class Sinogram:
    """Samples L(s, a): signed detector offset s, ray angle a in [0, pi).

    The ray for (s, a) passes through s*(-sin a, cos a) with direction
    omega = (cos a, sin a).
    """

    offsets: np.ndarray
    angles: np.ndarray
    samples: np.ndarray  # (n_offsets, n_angles)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=float)
        self.angles = np.asarray(self.angles, dtype=float)
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.shape != (self.offsets.size, self.angles.size):
            raise ConfigError("Sinogram: samples shape mismatch")

    def to_csv(self) -> str:
        ds = self.offsets[1] - self.offsets[0] if self.offsets.size > 1 \
            else 0.0
        lines = [f"# n_offsets={self.offsets.size},"
                 f"n_angles={self.angles.size},spacing={float(ds)!r}"]
        lines.append("offset," + ",".join(repr(float(a))
                                          for a in self.angles))
        for i, s in enumerate(self.offsets):
            row = ",".join(repr(float(v)) for v in self.samples[i])
            lines.append(f"{float(s)!r},{row}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> "Sinogram":
        lines = [ln for ln in text.strip().split("\n") if ln]
        if not lines[0].startswith("#"):
            raise ConfigError("Sinogram.from_csv: missing header")
        angles = np.array([float(v) for v in lines[1].split(",")[1:]])
        offsets, rows = [], []
        for ln in lines[2:]:
            vals = [float(v) for v in ln.split(",")]
            offsets.append(vals[0])
            rows.append(vals[1:])
        return cls(np.array(offsets), angles, np.array(rows))


@dataclass
class Reconstruction:
    """Gridded scalar field over the support box."""

    axes: tuple  # (x1 axis, x2 axis)
    values: np.ndarray
    method: str
    reg: float = 0.0
    rel_l2_error: float = None

    def to_pgm(self, levels: int = 255) -> str:
        """ASCII PGM preview (rows = x2 descending, columns = x1)."""
        v = self.values
        lo, hi = float(np.min(v)), float(np.max(v))
        span = hi - lo if hi > lo else 1.0
        img = np.round((v - lo) / span * levels).astype(int)
        img = img.T[::-1]  # x2 up
        head = f"P2\n{img.shape[1]} {img.shape[0]}\n{levels}\n"
        body = "\n".join(" ".join(str(p) for p in row) for row in img)
        return head + body + "\n"


# ----------------------------------------------------------------------
# forward light-ray transform


def _line_bounds(center, R, base, direction):
    """nu-interval where base + nu*direction meets the ball (center, R)."""
    d = base - center  # (..., 2)
    b = d @ direction
    cc = np.sum(d * d, axis=-1) - R**2
    disc = b * b - cc
    ok = disc > 0
    root = np.sqrt(np.maximum(disc, 0.0))
    lo = np.where(ok, -b - root, 0.0)
    hi = np.where(ok, -b + root, 0.0)
    return lo, hi


def _adaptive_line_integral(fvals, lo, length, abs_tol):
    """Composite Simpson with node doubling; fvals(sig array (m, k))."""
    def simpson(nseg):
        xi = np.linspace(0.0, 1.0, nseg + 1)
        wts = np.ones(nseg + 1)
        wts[1:-1:2] = 4.0
        wts[2:-1:2] = 2.0
        sig = lo[:, None] + length[:, None] * xi[None, :]
        return (length / (3.0 * nseg)) * (fvals(sig) @ wts)

    nseg = 16
    prev = simpson(nseg)
    for _ in range(RAY_QUAD_MAX_DOUBLINGS):
        nseg *= 2
        cur = simpson(nseg)
        if np.max(np.abs(cur - prev)) < abs_tol:
            return cur
        prev = cur
    raise QuadratureError(
        f"line quadrature not converged (last update "
        f"{np.max(np.abs(cur - prev)):.2e})")


def lightray_forward(fld: VectorFieldF, V: LightVector, W: LightVector,
                     offsets, angles, t0: float = 0.0,
                     abs_tol: float = RAY_QUAD_ABS_TOL) -> Sinogram:
    """Sinogram of the light-ray transform of F over an angle sweep.

    W fixes the sign convention (must be -1, incoming); the direction
    omega is swept over `angles`.  t0 is the time coordinate at nu = 0.
    """
    if V is not fld.V and V != fld.V:
        raise ConfigError("lightray_forward: V does not match the field")
    if W.sign != -1:
        raise ConfigError("lightray_forward: W must have sign -1")
    if fld.q.n != 2:
        raise ConfigError("lightray_forward: sinogram sweep is 2-D only")
    offsets = np.asarray(offsets, dtype=float)
    angles = np.asarray(angles, dtype=float)
    th = np.array(V.direction)
    vt = V.twin_array()
    center = np.array(fld.q.center)
    samples = np.zeros((offsets.size, angles.size))
    for ja, a in enumerate(angles):
        om = np.array([np.cos(a), np.sin(a)])
        perp = np.array([-np.sin(a), np.cos(a)])
        pair = float(V.sign + th @ om)  # <Vt, Wt>_M with Wt = (1, omega)
        base = offsets[:, None] * perp[None, :]
        lo, hi = _line_bounds(center, fld.q.R, base, om)
        if fld.q.time_radius is not None:
            lo = np.maximum(lo, -fld.q.time_radius - t0)
            hi = np.minimum(hi, fld.q.time_radius - t0)
        length = np.maximum(hi - lo, 0.0)
        act = length > 0
        if not np.any(act):
            continue
        loa, lena, basea = lo[act], length[act], base[act]

        def fvals(sig):
            pts = basea[:, None, :] + sig[..., None] * om[None, None, :]
            pref = fld.scalar_prefactor(t0 + sig,
                                        [pts[..., 0], pts[..., 1]])
            return pref * pair

        vals = np.zeros(offsets.size)
        vals[act] = _adaptive_line_integral(fvals, loa, lena, abs_tol)
        samples[:, ja] = vals
    meta = {"V": [V.sign, list(V.direction)], "W_sign": W.sign,
            "phi": fld.phi.key, "q": getattr(fld.q, "key", "?"), "t0": t0}
    return Sinogram(offsets, angles, samples, meta)


# ----------------------------------------------------------------------
# reduction to the Euclidean X-ray transform


@dataclass(frozen=True)
class ReducedIntegrand:
    """The x'-integrand whose straight-line integrals equal L_1.

    Valid only in the reduced configuration: q time-independent and
    u-independent, theta perpendicular to omega, and phi' constant over
    the interaction window; then the ray integrand q(x') phi'(..) <Vt,Wt>_M
    collapses to weight * q(x').
    """

    q: Potential
    weight: float

    def __call__(self, x1, x2):
        return self.weight * self.q.q(0.0, [np.asarray(x1, dtype=float),
                                            np.asarray(x2, dtype=float)],
                                      0.0)


def xray_reduce(q: Potential, phi: Profile, V: LightVector,
                W: LightVector) -> ReducedIntegrand:
    """Exact reduction of L_1 to an X-ray transform on R^2."""
    if q.n != 2:
        raise ConfigError("xray_reduce: 2-D potentials only")
    if q.time_radius is not None:
        raise ConfigError("xray_reduce: q must be time-independent")
    if getattr(q, "u_degree", None) != 0:
        raise ConfigError("xray_reduce: q must be u-independent "
                          "(unreduced configuration)")
    th = np.array(V.direction)
    om = np.array(W.direction)
    if abs(float(th @ om)) > 1e-12:
        raise ConfigError("xray_reduce: need theta perpendicular to omega "
                          "(unreduced configuration)")
    # phi' must be constant over every argument the rays can produce:
    # |<x,V>_M| <= |theta.c| + R + nu-span along the ray
    c = np.array(q.center)
    margin = abs(float(th @ c)) + q.R + (abs(float(om @ c)) + q.R)
    s = np.linspace(-margin, margin, 101)
    slope = float(phi.df(0.0))
    if np.max(np.abs(phi.df(s) - slope)) > 1e-12:
        raise ConfigError("xray_reduce: phi' not constant over the "
                          "interaction window (unreduced configuration)")
    pair = float(V.sign + th @ om)  # theta.omega = 0 here
    return ReducedIntegrand(q, slope * pair)


def xray_forward_2d(integrand, offsets, angles, support_center,
                    support_R, abs_tol: float = RAY_QUAD_ABS_TOL) -> Sinogram:
    """Straight-line integrals of a scalar integrand (oracle/phantom path)."""
    offsets = np.asarray(offsets, dtype=float)
    angles = np.asarray(angles, dtype=float)
    center = np.asarray(support_center, dtype=float)
    samples = np.zeros((offsets.size, angles.size))
    for ja, a in enumerate(angles):
        om = np.array([np.cos(a), np.sin(a)])
        perp = np.array([-np.sin(a), np.cos(a)])
        base = offsets[:, None] * perp[None, :]
        lo, hi = _line_bounds(center, support_R, base, om)
        length = np.maximum(hi - lo, 0.0)
        act = length > 0
        if not np.any(act):
            continue
        loa, lena, basea = lo[act], length[act], base[act]

        def fvals(sig):
            pts = basea[:, None, :] + sig[..., None] * om[None, None, :]
            return integrand(pts[..., 0], pts[..., 1])

        vals = np.zeros(offsets.size)
        vals[act] = _adaptive_line_integral(fvals, loa, lena, abs_tol)
        samples[:, ja] = vals
    return Sinogram(offsets, angles, samples, {"kind": "xray"})


# ----------------------------------------------------------------------
# 2-D inversion


def _check_uniform(v, what):
    d = np.diff(v)
    if v.size < 2 or np.max(np.abs(d - d[0])) > 1e-10 * abs(d[0]):
        raise ConfigError(f"invert_xray_2d: {what} must be uniform")
    return float(d[0])


def _fbp(sino: Sinogram, axes) -> np.ndarray:
    ds = _check_uniform(sino.offsets, "offsets")
    n = sino.offsets.size
    # generous centered padding: the filtered projection's 1/s^2 tails
    # beyond the measured offsets matter for pixels near the box corners
    npad = 1 << int(np.ceil(np.log2(4 * n)))
    pad0 = (npad - n) // 2
    freqs = np.fft.rfftfreq(npad, d=ds)
    cut = 0.9 * (0.5 / ds)
    # ramp |nu| apodized by a raised cosine rolling off at 0.9 Nyquist
    win = np.where(freqs <= cut, 0.5 * (1 + np.cos(np.pi * freqs / cut)),
                   0.0)
    filt = np.abs(freqs) * win
    x1, x2 = axes
    X1 = x1[:, None]
    X2 = x2[None, :]
    out = np.zeros((x1.size, x2.size))
    s0 = sino.offsets[0] - pad0 * ds
    # midpoint quadrature weights over the pi-periodic angle sweep; for a
    # uniform sweep every weight is pi/n, and gaps from dropped angles are
    # shared between their neighbours
    ang = sino.angles
    ext = np.concatenate(([ang[-1] - np.pi], ang, [ang[0] + np.pi]))
    wa = 0.5 * (ext[2:] - ext[:-2])
    for ja, a in enumerate(ang):
        p = np.zeros(npad)
        p[pad0:pad0 + n] = sino.samples[:, ja]
        q = np.fft.irfft(np.fft.rfft(p) * filt, npad)
        s = -np.sin(a) * X1 + np.cos(a) * X2  # signed offset of each pixel
        # linear interpolation of the filtered projection (incl. tails)
        u = (s - s0) / ds
        i0 = np.clip(np.floor(u).astype(int), 0, npad - 2)
        w = np.clip(u - i0, 0.0, 1.0)
        out += wa[ja] * ((1 - w) * q[i0] + w * q[i0 + 1])
    return out


def _ray_samples(sino: Sinogram, axes):
    """Fixed sampling of all rays for the matrix-free discrete operator."""
    x1, x2 = axes
    d1 = _check_uniform(x1, "axis 1")
    d2 = _check_uniform(x2, "axis 2")
    step = 0.5 * min(d1, d2)
    span = float(np.hypot(x1[-1] - x1[0], x2[-1] - x2[0]))
    nu = np.arange(-0.5 * span, 0.5 * span + step, step)
    return d1, d2, step, nu


def _forward_apply(img, sino_shape, sino, axes, geom):
    d1, d2, step, nu = geom
    x1, x2 = axes
    out = np.zeros(sino_shape)
    for ja, a in enumerate(sino.angles):
        om = np.array([np.cos(a), np.sin(a)])
        perp = np.array([-np.sin(a), np.cos(a)])
        p1 = sino.offsets[:, None] * perp[0] + nu[None, :] * om[0]
        p2 = sino.offsets[:, None] * perp[1] + nu[None, :] * om[1]
        u = (p1 - x1[0]) / d1
        v = (p2 - x2[0]) / d2
        inside = (u >= 0) & (u <= x1.size - 1) & (v >= 0) & (v <= x2.size - 1)
        i0 = np.clip(np.floor(u).astype(int), 0, x1.size - 2)
        j0 = np.clip(np.floor(v).astype(int), 0, x2.size - 2)
        fu = np.clip(u - i0, 0.0, 1.0)
        fv = np.clip(v - j0, 0.0, 1.0)
        val = ((1 - fu) * (1 - fv) * img[i0, j0]
               + fu * (1 - fv) * img[i0 + 1, j0]
               + (1 - fu) * fv * img[i0, j0 + 1]
               + fu * fv * img[i0 + 1, j0 + 1])
        out[:, ja] = np.sum(np.where(inside, val, 0.0), axis=1) * step
    return out


def _adjoint_apply(res, img_shape, sino, axes, geom):
    d1, d2, step, nu = geom
    x1, x2 = axes
    out = np.zeros(img_shape)
    for ja, a in enumerate(sino.angles):
        om = np.array([np.cos(a), np.sin(a)])
        perp = np.array([-np.sin(a), np.cos(a)])
        p1 = sino.offsets[:, None] * perp[0] + nu[None, :] * om[0]
        p2 = sino.offsets[:, None] * perp[1] + nu[None, :] * om[1]
        u = (p1 - x1[0]) / d1
        v = (p2 - x2[0]) / d2
        inside = (u >= 0) & (u <= x1.size - 1) & (v >= 0) & (v <= x2.size - 1)
        i0 = np.clip(np.floor(u).astype(int), 0, x1.size - 2)
        j0 = np.clip(np.floor(v).astype(int), 0, x2.size - 2)
        fu = np.clip(u - i0, 0.0, 1.0)
        fv = np.clip(v - j0, 0.0, 1.0)
        r = np.where(inside, res[:, ja][:, None] * step, 0.0)
        np.add.at(out, (i0, j0), (1 - fu) * (1 - fv) * r)
        np.add.at(out, (i0 + 1, j0), fu * (1 - fv) * r)
        np.add.at(out, (i0, j0 + 1), (1 - fu) * fv * r)
        np.add.at(out, (i0 + 1, j0 + 1), fu * fv * r)
    return out


def _rls(sino: Sinogram, axes, reg: float, iters: int = 60,
         tol: float = 1e-10) -> np.ndarray:
    """CGLS on the normal equations (A^T A + reg I) x = A^T b."""
    geom = _ray_samples(sino, axes)
    img_shape = (axes[0].size, axes[1].size)
    b = sino.samples

    def normal(x):
        ax = _forward_apply(x, b.shape, sino, axes, geom)
        return _adjoint_apply(ax, img_shape, sino, axes, geom) + reg * x

    x = np.zeros(img_shape)
    r = _adjoint_apply(b, img_shape, sino, axes, geom)  # A^T b - N x0
    p = r.copy()
    rs = float(np.sum(r * r))
    rs0 = rs
    for _ in range(iters):
        if rs <= tol**2 * max(rs0, 1e-300):
            break
        np_ = normal(p)
        alpha = rs / float(np.sum(p * np_))
        x += alpha * p
        r -= alpha * np_
        rs_new = float(np.sum(r * r))
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x


def invert_xray_2d(sino: Sinogram, axes, method: str = "fbp",
                   reg: float = 0.0, truth=None) -> Reconstruction:
    """Invert a 2-D parallel-beam sinogram on the pixel grid `axes`.

    fbp: apodized ramp filter + bilinear backprojection (needs >= 90
    angles, else falls back to rls with a warning; gaps in the sweep
    are absorbed by midpoint quadrature weights).
    rls: conjugate-gradient least squares with Tikhonov weight `reg`.
    """
    if method not in ("fbp", "rls"):
        raise ConfigError(f"invert_xray_2d: unknown method '{method}'")
    axes = (np.asarray(axes[0], dtype=float), np.asarray(axes[1], dtype=float))
    if method == "fbp":
        if sino.angles.size < 90:
            warnings.warn("invert_xray_2d: fewer than 90 angles; "
                          "falling back to rls")
            method = "rls"
        else:
            da = np.diff(sino.angles)
            if np.any(da <= 0) or sino.angles[-1] - sino.angles[0] >= np.pi:
                raise ConfigError("invert_xray_2d: angles must increase "
                                  "within one half-turn")
    if np.all(sino.samples == 0.0):
        values = np.zeros((axes[0].size, axes[1].size))
    elif method == "fbp":
        values = _fbp(sino, axes)
    else:
        values = _rls(sino, axes, reg)
    err = None
    if truth is not None:
        t = np.asarray(truth, dtype=float)
        denom = float(np.sqrt(np.sum(t * t)))
        if denom > 0:
            err = float(np.sqrt(np.sum((values - t) ** 2))) / denom
    return Reconstruction(axes, values, method, reg, err)
