"""Compactly supported smooth profiles with hand-coded exact derivatives.

A small closed family (no symbolic differentiation): the classic C^inf
bump, an odd bump, a cos^4 window, and a plateau ramp whose derivative
is exactly the amplitude on a flat inner window (the probe profile used
for the X-ray reduction).  All evaluators are vectorized and vanish
identically outside [-support_radius, support_radius].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Profile:
    """One-variable C^k compactly supported function with two derivatives."""

    key: str
    support_radius: float
    _f: Callable
    _df: Callable
    _d2f: Callable

    def f(self, s):
        return self._f(np.asarray(s, dtype=float))

    def df(self, s):
        return self._df(np.asarray(s, dtype=float))

    def d2f(self, s):
        return self._d2f(np.asarray(s, dtype=float))

    # convenience aliases
    def __call__(self, s):
        return self.f(s)


def _masked(radius, raw):
    """Wrap a raw evaluator so it is exactly zero outside the open support."""

    def ev(s):
        s = np.asarray(s, dtype=float)
        inside = np.abs(s) < radius * (1.0 - 1e-14)
        out = np.zeros_like(s)
        if np.any(inside):
            out[inside] = raw(s[inside])
        if out.ndim == 0:
            return float(out)
        return out

    return ev


def bump(radius=1.0, amplitude=1.0, key=None):
    """C^inf bump a*exp(1 - 1/(1-(s/r)^2)), normalized to `amplitude` at 0."""
    r, a = float(radius), float(amplitude)

    def val(s):
        u = (s / r) ** 2
        return a * np.exp(1.0 - 1.0 / (1.0 - u))

    def dval(s):
        u = (s / r) ** 2
        w = 1.0 - u
        return val(s) * (-(2.0 * s / r**2) / w**2)

    def d2val(s):
        u = (s / r) ** 2
        w = 1.0 - u
        g = 2.0 * s / r**2
        return val(s) * (g**2 / w**4 - (2.0 / r**2) / w**2 - 2.0 * g**2 / w**3)

    key = key or f"bump:r={r:g},a={a:g}"
    return Profile(key, r, _masked(r, val), _masked(r, dval), _masked(r, d2val))


def sbump(radius=1.0, amplitude=1.0, key=None):
    """Odd profile (s/r)*bump(s); useful as a second certificate profile."""
    r, a = float(radius), float(amplitude)
    b = bump(r, a)

    def val(s):
        return (s / r) * b.f(s)

    def dval(s):
        return b.f(s) / r + (s / r) * b.df(s)

    def d2val(s):
        return 2.0 * b.df(s) / r + (s / r) * b.d2f(s)

    key = key or f"sbump:r={r:g},a={a:g}"
    return Profile(key, r, _masked(r, val), _masked(r, dval), _masked(r, d2val))


def cos4_window(radius=1.0, amplitude=1.0, key=None):
    """a*cos^4(pi*s/(2r)) on |s| < r; C^3 at the support boundary."""
    r, a = float(radius), float(amplitude)
    k = np.pi / (2.0 * r)

    def val(s):
        return a * np.cos(k * s) ** 4

    def dval(s):
        return -4.0 * a * k * np.cos(k * s) ** 3 * np.sin(k * s)

    def d2val(s):
        c, sn = np.cos(k * s), np.sin(k * s)
        return -4.0 * a * k**2 * c**2 * (c**2 - 3.0 * sn**2)

    key = key or f"cos4:r={r:g},a={a:g}"
    return Profile(key, r, _masked(r, val), _masked(r, dval), _masked(r, d2val))


def _smoothstep7(tau):
    """7th-order smoothstep: 0->1 on [0,1] with three zero derivatives at ends."""
    t = np.clip(tau, 0.0, 1.0)
    return t**4 * (35.0 - 84.0 * t + 70.0 * t**2 - 20.0 * t**3)


def _smoothstep7_d1(tau):
    t = np.clip(tau, 0.0, 1.0)
    return t**3 * (140.0 - 420.0 * t + 420.0 * t**2 - 140.0 * t**3)


def _smoothstep7_d2(tau):
    t = np.clip(tau, 0.0, 1.0)
    return t**2 * (420.0 - 1680.0 * t + 2100.0 * t**2 - 840.0 * t**3)


def ramp(flat=1.5, taper=0.5, amplitude=1.0, key=None):
    """Plateau ramp f(s) = a*s*w(s) with window w == 1 on |s| <= flat.

    f'(s) = a exactly on the flat window, f compactly supported in
    [-(flat+taper), flat+taper]; C^3 overall.
    """
    L0, L1, a = float(flat), float(flat) + float(taper), float(amplitude)
    tp = float(taper)

    def w012(s):
        s_abs = np.abs(s)
        tau = (s_abs - L0) / tp
        w = np.where(s_abs <= L0, 1.0, 1.0 - _smoothstep7(tau))
        sgn = np.sign(s)
        w1 = np.where(s_abs <= L0, 0.0, -_smoothstep7_d1(tau) * sgn / tp)
        w2 = np.where(s_abs <= L0, 0.0, -_smoothstep7_d2(tau) / tp**2)
        return w, w1, w2

    def val(s):
        w, _, _ = w012(s)
        return a * s * w

    def dval(s):
        w, w1, _ = w012(s)
        return a * (w + s * w1)

    def d2val(s):
        _, w1, w2 = w012(s)
        return a * (2.0 * w1 + s * w2)

    key = key or f"ramp:flat={L0:g},taper={tp:g},a={a:g}"
    return Profile(key, L1, _masked(L1, val), _masked(L1, dval), _masked(L1, d2val))


PROFILE_CATALOG = {
    "bump": bump,
    "sbump": sbump,
    "cos4": cos4_window,
    "ramp": ramp,
}


def get_profile(key: str) -> Profile:
    """Construct a catalog profile from a string key.

    Format: ``name`` or ``name:param=value,param=value``, e.g.
    ``bump:r=0.3,a=1.0`` or ``ramp:flat=1.5,taper=0.5``.
    """
    name, _, argstr = key.partition(":")
    if name not in PROFILE_CATALOG:
        raise ConfigError(f"unknown profile '{name}' (have {sorted(PROFILE_CATALOG)})")
    kwargs = {}
    alias = {"r": "radius", "a": "amplitude"}
    if argstr:
        for item in argstr.split(","):
            k, _, v = item.partition("=")
            if not _:
                raise ConfigError(f"bad profile parameter '{item}' in '{key}'")
            kwargs[alias.get(k.strip(), k.strip())] = float(v)
    try:
        return PROFILE_CATALOG[name](**kwargs, key=key)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for profile '{key}': {exc}") from None
