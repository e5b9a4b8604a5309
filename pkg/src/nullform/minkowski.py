"""Null-vector algebra and plane-wave backgrounds on Minkowski space.

Conventions used throughout the package (fixed here once):

* metric signature (-1, +1, ..., +1); pairing <a,b>_M = -a0*b0 + a'.b'
* a light vector V = (s, theta) with s = +-1 and |theta| = 1; its twin is
  Vt = (-s, theta).  Both are null.
* for a profile g, the background g_V(x) = g(<x,V>_M) satisfies
  grad g_V = g'_V * Vt  and  box g_V = 0  with box = -d_t^2 + Laplacian,
  so the null form q*((d_t u)^2 - |grad' u|^2) annihilates it exactly.
* the carrier phase is psi(x) = <x,W>_M with W = (-1, omega), i.e.
  psi = t + omega.x'; the transport operator T = d_t - omega.grad'
  annihilates any function of psi, and its characteristics are
  s -> (s, y - s*omega).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constants import UNIT_NORM_TOL
from .errors import ConfigError


def metric_diag(n: int) -> np.ndarray:
    """Diagonal of the Minkowski metric on R^{1+n}."""
    d = np.ones(n + 1)
    d[0] = -1.0
    return d


def mdot_vec(a, b) -> np.ndarray:
    """Minkowski pairing of two (n+1)-component objects.

    Components may be arrays (broadcast pointwise); index 0 is time.
    """
    out = -a[0] * b[0]
    for j in range(1, len(a)):
        out = out + a[j] * b[j]
    return out


@dataclass(frozen=True)
class LightVector:
    """Null covector V = (sign, theta) with |theta| = 1."""

    sign: int
    direction: tuple

    def __post_init__(self):
        if self.sign not in (-1, 1):
            raise ConfigError("LightVector.sign must be +-1")
        d = np.asarray(self.direction, dtype=float)
        object.__setattr__(self, "direction", tuple(d.tolist()))
        if abs(np.linalg.norm(d) - 1.0) > UNIT_NORM_TOL:
            raise ConfigError("LightVector.direction must be a unit vector")

    @property
    def n(self) -> int:
        return len(self.direction)

    def twin(self) -> "LightVector":
        return LightVector(-self.sign, self.direction)

    def as_array(self) -> np.ndarray:
        return np.array([float(self.sign), *self.direction])

    def twin_array(self) -> np.ndarray:
        return np.array([-float(self.sign), *self.direction])


@dataclass(frozen=True)
class SpacetimePoint:
    """x = (x0, x') with x0 the time coordinate."""

    x0: float
    xp: tuple

    def as_array(self) -> np.ndarray:
        return np.array([self.x0, *self.xp], dtype=float)


def as_point(x) -> np.ndarray:
    """Coerce SpacetimePoint / sequence to an (n+1,) float array."""
    if isinstance(x, SpacetimePoint):
        return x.as_array()
    return np.asarray(x, dtype=float)


def minkowski_dot(x, V: LightVector) -> float:
    """<x,V>_M = -sign*x0 + theta.x'  (spec example: minus of V's time sign)."""
    xa = as_point(x)
    if xa.shape[-1] != V.n + 1:
        raise ConfigError(
            "dimension mismatch: point has %d space dims, V has %d"
            % (xa.shape[-1] - 1, V.n)
        )
    return float(mdot_vec(xa, V.as_array()))


def phase_arg(t, xs, V: LightVector):
    """<x,V>_M for gridded coordinates: t and xs = [x1, x2, ...] broadcast."""
    out = -float(V.sign) * t
    for th, xj in zip(V.direction, xs):
        out = out + th * xj
    return out


def eval_background(phi, V: LightVector, x):
    """Evaluate the plane-wave background at a point.

    Returns (value, gradient, dalembertian) with
    value = phi(<x,V>_M), gradient = phi'(<x,V>_M)*Vt, dalembertian = 0
    (exact: the profile composed with a null linear phase is box-free).
    """
    s = minkowski_dot(x, V)
    grad = phi.df(s) * V.twin_array()
    return phi.f(s), grad, 0.0


def transport_operator_apply(dfdt, grad_spatial, omega) -> np.ndarray:
    """T f = d_t f - omega . grad' f, applied to precomputed derivatives.

    ``dfdt`` and the entries of ``grad_spatial`` may be arrays.
    """
    out = np.asarray(dfdt, dtype=np.result_type(dfdt, *grad_spatial))
    out = out.copy()
    for w, g in zip(omega, grad_spatial):
        out = out - w * np.asarray(g)
    return out
