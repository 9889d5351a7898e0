"""Pointwise grid kernels for the bulk potential.

Each kernel has a numba ``@njit`` implementation and a pure-numpy one. The numba
path is used when numba imports and ``POLYBLEND_DISABLE_NUMBA`` is unset (or
``0``/``false``). Both paths take the flat parameter tuple from
:meth:`PotentialParams.as_tuple`.
"""
from __future__ import annotations

import math
import os

import numpy as np

from . import potential as _pot


def _flag_disabled() -> bool:
    return os.environ.get("POLYBLEND_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")


try:
    from numba import njit
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not _flag_disabled()


# ---------------------------------------------------------------------------
# numpy path

def potential_terms_numpy(u, v, pars):
    """Return ``(sum of F_delta over the grid, dF/du, dF/dv)``."""
    p = _params_from_tuple(pars)
    fsum = float(np.sum(_pot.f_delta(u, v, p, "value")))
    return fsum, np.asarray(_pot.f_delta(u, v, p, "du")), np.asarray(_pot.f_delta(u, v, p, "dv"))


def hessian_bounds_numpy(u, v, pars):
    """Curvature bounds of ``F_delta`` over the grid points.

    Returns the smallest Hessian eigenvalue and the row-wise Gershgorin upper
    bounds ``max(F_uu + |F_uv|)``, ``max(F_vv + |F_uv|)``.
    """
    p = _params_from_tuple(pars)
    fuu, fuv, fvv = _pot.hessian(u, v, p)
    half_tr = 0.5 * (fuu + fvv)
    rad = np.sqrt((0.5 * (fuu - fvv)) ** 2 + fuv ** 2)
    afuv = np.abs(fuv)
    return float(np.min(half_tr - rad)), float(np.max(fuu + afuv)), float(np.max(fvv + afuv))


def _params_from_tuple(pars):
    # bypass validation: parameters were validated when the tuple was produced
    p = object.__new__(_pot.PotentialParams)
    for name, val in zip(("theta_u", "theta_0u", "theta_v", "theta_0v",
                          "alpha", "beta", "gamma", "delta"), pars):
        object.__setattr__(p, name, float(val))
    return p


# ---------------------------------------------------------------------------
# numba path

if HAS_NUMBA:

    @njit(cache=True)
    def _sd(r, theta, k):
        one_m = 1.0 - r
        one_p = 1.0 + r
        if k == 0:
            return 0.5 * theta * (one_p * math.log1p(r) + one_m * math.log1p(-r))
        if k == 1:
            return 0.5 * theta * (math.log1p(r) - math.log1p(-r))
        w = one_m * one_p
        if k == 2:
            return theta / w
        if k == 3:
            return 2.0 * theta * r / (w * w)
        return 2.0 * theta * (1.0 + 3.0 * r * r) / (w * w * w)

    @njit(cache=True)
    def _sdelta(r, theta, delta, k):
        knot = 1.0 - delta
        if abs(r) <= knot:
            return _sd(r, theta, k)
        if r < 0.0:
            knot = -knot
        h = r - knot
        out = 0.0
        hp = 1.0
        fact = 1.0
        for i in range(k, 5):
            out += _sd(knot, theta, i) / fact * hp
            hp *= h
            fact *= i - k + 1
        return out

    @njit(cache=True)
    def _s01(r, theta, delta):
        # value and first derivative sharing the two logarithms
        if abs(r) <= 1.0 - delta:
            lp = math.log1p(r)
            lm = math.log1p(-r)
            return 0.5 * theta * ((1.0 + r) * lp + (1.0 - r) * lm), 0.5 * theta * (lp - lm)
        return _sdelta(r, theta, delta, 0), _sdelta(r, theta, delta, 1)

    @njit(cache=True)
    def potential_terms_numba(u, v, pars):
        th_u, th0u, th_v, th0v, a, b, g, delta = pars
        nx, ny = u.shape
        du = np.empty((nx, ny))
        dv = np.empty((nx, ny))
        fsum = 0.0
        for i in range(nx):
            for j in range(ny):
                x = u[i, j]
                y = v[i, j]
                su, su1 = _s01(x, th_u, delta)
                sv, sv1 = _s01(y, th_v, delta)
                fsum += (su - 0.5 * th0u * x * x + sv - 0.5 * th0v * y * y
                         + a * x * y + b * x * y * y + g * x * x * y)
                du[i, j] = su1 - th0u * x + (a * y + b * y * y + 2.0 * g * x * y)
                dv[i, j] = sv1 - th0v * y + (a * x + 2.0 * b * x * y + g * x * x)
        return fsum, du, dv

    @njit(cache=True)
    def hessian_bounds_numba(u, v, pars):
        th_u, th0u, th_v, th0v, a, b, g, delta = pars
        nx, ny = u.shape
        best = np.inf
        top_u = -np.inf
        top_v = -np.inf
        for i in range(nx):
            for j in range(ny):
                x = u[i, j]
                y = v[i, j]
                fuu = _sdelta(x, th_u, delta, 2) - th0u + 2.0 * g * y
                fvv = _sdelta(y, th_v, delta, 2) - th0v + 2.0 * b * x
                fuv = a + 2.0 * b * y + 2.0 * g * x
                lam = 0.5 * (fuu + fvv) - math.sqrt((0.5 * (fuu - fvv)) ** 2 + fuv * fuv)
                if lam < best:
                    best = lam
                if fuu + abs(fuv) > top_u:
                    top_u = fuu + abs(fuv)
                if fvv + abs(fuv) > top_v:
                    top_v = fvv + abs(fuv)
        return best, top_u, top_v

else:  # pragma: no cover
    potential_terms_numba = None
    hessian_bounds_numba = None


def potential_terms(u, v, pars):
    if USE_NUMBA:
        return potential_terms_numba(np.ascontiguousarray(u), np.ascontiguousarray(v), pars)
    return potential_terms_numpy(u, v, pars)


def hessian_bounds(u, v, pars):
    if USE_NUMBA:
        return hessian_bounds_numba(np.ascontiguousarray(u), np.ascontiguousarray(v), pars)
    return hessian_bounds_numpy(u, v, pars)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
