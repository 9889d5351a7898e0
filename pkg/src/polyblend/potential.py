"""Flory-Huggins bulk potential, its quartic Taylor regularization and the coupling.

All functions are vectorized over numpy arrays and also accept plain floats.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

_WHICH_FIELD = ("u", "v")
_WHICH_PARTIAL = ("value", "du", "dv")


class PotentialDomainError(ValueError):
    """Raised when the singular entropy is evaluated outside (-1, 1)."""


@dataclass(frozen=True)
class PotentialParams:
    """Temperatures, coupling coefficients and the regularization knot.

    ``theta_*`` are absolute temperatures, ``theta_0*`` critical temperatures.
    The regularized entropy coincides with the logarithmic one on
    ``|r| <= 1 - delta``.
    """

    theta_u: float = 1.0
    theta_0u: float = 2.0
    theta_v: float = 1.0
    theta_0v: float = 2.0
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    delta: float = 1e-3

    def __post_init__(self):
        for name in ("theta_u", "theta_0u", "theta_v", "theta_0v", "alpha", "beta", "gamma", "delta"):
            val = getattr(self, name)
            if not np.isfinite(val):
                raise ValueError(f"{name} must be finite, got {val!r}")
        if not 0.0 < self.theta_u < self.theta_0u:
            raise ValueError(f"need 0 < theta_u < theta_0u, got {self.theta_u}, {self.theta_0u}")
        if not 0.0 < self.theta_v < self.theta_0v:
            raise ValueError(f"need 0 < theta_v < theta_0v, got {self.theta_v}, {self.theta_0v}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"need 0 < delta < 1, got {self.delta}")
        # convexity certificate of the regularized entropy on a wide sample
        r = np.linspace(-4.0, 4.0, 20001)
        for theta in (self.theta_u, self.theta_v):
            if np.min(_hat_s_delta(r, theta, self.delta, 2)) <= 0.0:
                raise ValueError(f"delta={self.delta} too large: regularized entropy is not convex")

    def temperatures(self, which: str) -> tuple[float, float]:
        if which == "u":
            return self.theta_u, self.theta_0u
        if which == "v":
            return self.theta_v, self.theta_0v
        raise ValueError(f"which must be one of {_WHICH_FIELD}, got {which!r}")

    def as_tuple(self) -> tuple[float, ...]:
        """Flat float tuple in the argument order used by the grid kernels."""
        return (self.theta_u, self.theta_0u, self.theta_v, self.theta_0v,
                self.alpha, self.beta, self.gamma, self.delta)


def _closed_form(r, theta, k):
    # r strictly inside (-1, 1)
    one_m = 1.0 - r
    one_p = 1.0 + r
    if k == 0:
        return 0.5 * theta * (one_p * np.log1p(r) + one_m * np.log1p(-r))
    if k == 1:
        return 0.5 * theta * (np.log1p(r) - np.log1p(-r))
    w = one_m * one_p
    if k == 2:
        return theta / w
    if k == 3:
        return 2.0 * theta * r / (w * w)
    if k == 4:
        return 2.0 * theta * (1.0 + 3.0 * r * r) / (w * w * w)
    raise ValueError(f"derivative order must be in 0..4, got {k}")


def _check_open_interval(r):
    r = np.asarray(r, dtype=float)
    if np.any(~(np.abs(r) < 1.0)):
        raise PotentialDomainError("singular entropy requires |r| < 1")
    return r


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def hat_s(r, theta: float):
    """Mixing entropy ``theta/2 [(1+r)log(1+r) + (1-r)log(1-r)]``."""
    r = _check_open_interval(r)
    return _scalar_or_array(_closed_form(r, theta, 0))


def hat_s_deriv(r, theta: float, k: int):
    """Closed-form derivative of order ``k`` (1..4) of :func:`hat_s`."""
    if k not in (1, 2, 3, 4):
        raise PotentialDomainError(f"derivative order must be in 1..4, got {k}")
    r = _check_open_interval(r)
    return _scalar_or_array(_closed_form(r, theta, k))


def _taylor_tail(r, knot, theta, k):
    # k-th derivative of the quartic Taylor polynomial of hat_s about `knot`
    h = r - knot
    out = np.zeros_like(h)
    for i in range(k, 5):
        out = out + _closed_form(knot, theta, i) / factorial(i - k) * h ** (i - k)
    return out


def _hat_s_delta(r, theta, delta, k):
    r = np.asarray(r, dtype=float)
    knot = 1.0 - delta
    inner = np.abs(r) <= knot
    out = np.empty_like(r)
    # evaluate each branch only on its own points so the log never sees |r| >= 1
    if np.any(inner):
        out[inner] = _closed_form(r[inner], theta, k)
    hi = r > knot
    if np.any(hi):
        out[hi] = _taylor_tail(r[hi], knot, theta, k)
    lo = r < -knot
    if np.any(lo):
        out[lo] = _taylor_tail(r[lo], -knot, theta, k)
    return out


def hat_s_delta(r, params: PotentialParams, which: str = "u", k: int = 0):
    """Globally defined C^4 regularization of :func:`hat_s`, derivative order ``k``.

    Equal to the logarithmic entropy on ``|r| <= 1 - delta`` and to its fourth-order
    Taylor polynomial about ``+-(1 - delta)`` outside.
    """
    if k not in (0, 1, 2, 3, 4):
        raise ValueError(f"derivative order must be in 0..4, got {k}")
    theta, _ = params.temperatures(which)
    return _scalar_or_array(_hat_s_delta(r, theta, params.delta, k))


def coupling(u, v, params: PotentialParams, which: str = "value"):
    """Polynomial coupling ``alpha uv + beta uv^2 + gamma u^2 v`` or a partial derivative."""
    a, b, g = params.alpha, params.beta, params.gamma
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if which == "value":
        out = a * u * v + b * u * v * v + g * u * u * v
    elif which == "du":
        out = a * v + b * v * v + 2.0 * g * u * v
    elif which == "dv":
        out = a * u + 2.0 * b * u * v + g * u * u
    else:
        raise ValueError(f"which must be one of {_WHICH_PARTIAL}, got {which!r}")
    return _scalar_or_array(out)


def _bulk(u, v, params, which, entropy):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if which == "value":
        out = (entropy(u, params.theta_u, 0) - 0.5 * params.theta_0u * u * u
               + entropy(v, params.theta_v, 0) - 0.5 * params.theta_0v * v * v)
    elif which == "du":
        out = entropy(u, params.theta_u, 1) - params.theta_0u * u
    elif which == "dv":
        out = entropy(v, params.theta_v, 1) - params.theta_0v * v
    else:
        raise ValueError(f"which must be one of {_WHICH_PARTIAL}, got {which!r}")
    return _scalar_or_array(out + coupling(u, v, params, which))


def f_delta(u, v, params: PotentialParams, which: str = "value"):
    """Regularized bivariate potential ``F_delta`` or one of its first partials."""
    return _bulk(u, v, params, which, lambda r, th, k: _hat_s_delta(r, th, params.delta, k))


def f_singular(u, v, params: PotentialParams, which: str = "value"):
    """Unregularized bivariate potential; raises outside the open square."""
    _check_open_interval(u)
    _check_open_interval(v)
    return _bulk(u, v, params, which, _closed_form)


def hessian(u, v, params: PotentialParams):
    """Entries ``(F_uu, F_uv, F_vv)`` of the Hessian of ``F_delta``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    a, b, g = params.alpha, params.beta, params.gamma
    fuu = _hat_s_delta(u, params.theta_u, params.delta, 2) - params.theta_0u + 2.0 * g * v
    fvv = _hat_s_delta(v, params.theta_v, params.delta, 2) - params.theta_0v + 2.0 * b * u
    fuv = a + 2.0 * b * v + 2.0 * g * u
    return _scalar_or_array(fuu), _scalar_or_array(fuv), _scalar_or_array(fvv)


# ---------------------------------------------------------------------------
# coercivity certificate

_LATTICE_HALF_WIDTH = 4.0
_LATTICE_STEP = 1e-2
_MARGIN = 1e-9
_K2_CEILING = 1e6


class CoercivityError(RuntimeError):
    pass


def _tail_dominates(params: PotentialParams, k1: float, radius: float) -> bool:
    # Separable lower bound for |r| >= radius, using Young on the coupling:
    # S_delta(r) - (theta0 + |alpha|)/2 r^2 - a_r |r|^3 - k1 r^4 >= 0.
    # For r >= knot every Taylor coefficient is >= 0, so S_delta(r) >= S4/24 (r - knot)^4.
    knot = 1.0 - params.delta
    ab, bb, gb = abs(params.alpha), abs(params.beta), abs(params.gamma)
    cubic = {"u": bb / 3.0 + 2.0 * gb / 3.0, "v": 2.0 * bb / 3.0 + gb / 3.0}
    for which in _WHICH_FIELD:
        theta, theta0 = params.temperatures(which)
        quart = _closed_form(knot, theta, 4) / 24.0 * (1.0 - knot / radius) ** 4 - k1
        quad = 0.5 * (theta0 + ab)
        if quart <= 0.0 or quart * radius ** 2 - cubic[which] * radius - quad < 0.0:
            return False
    return True


def coercivity_constants(params: PotentialParams) -> tuple[float, float]:
    """Constants ``k1, k2 > 0`` with ``F_delta(u, v) >= k1 (u^4 + v^4) - k2``.

    ``k1`` is ``c/48`` with ``c`` the global minimum ``2 min(theta_u, theta_v)`` of the
    fourth entropy derivative. ``k2`` is the smallest value, raised in 1% steps, for
    which the bound holds with margin on the lattice ``[-4, 4]^2`` (step ``1e-2``);
    beyond the lattice the quartic Taylor tails are checked to dominate analytically.
    """
    c = 2.0 * min(params.theta_u, params.theta_v)
    k1 = c / 48.0
    if not _tail_dominates(params, k1, _LATTICE_HALF_WIDTH):
        raise CoercivityError("quartic tails do not dominate outside the verification lattice")

    g = np.arange(-_LATTICE_HALF_WIDTH, _LATTICE_HALF_WIDTH + 0.5 * _LATTICE_STEP, _LATTICE_STEP)
    # Separable bound controls points with one coordinate off the lattice.
    ab, bb, gb = abs(params.alpha), abs(params.beta), abs(params.gamma)
    sep = 0.0
    for which, cub in (("u", bb / 3.0 + 2.0 * gb / 3.0), ("v", 2.0 * bb / 3.0 + gb / 3.0)):
        theta, theta0 = params.temperatures(which)
        h = (_hat_s_delta(g, theta, params.delta, 0) - 0.5 * (theta0 + ab) * g * g
             - cub * np.abs(g) ** 3 - k1 * g ** 4)
        sep += min(0.0, float(h.min()))
    uu, vv = np.meshgrid(g, g, indexing="ij")
    excess = f_delta(uu, vv, params) - k1 * (uu ** 4 + vv ** 4)
    need = max(-float(excess.min()), -sep, k1) + _MARGIN

    k2 = need
    while k2 <= _K2_CEILING:
        if float((excess + k2).min()) >= _MARGIN and sep + k2 >= _MARGIN:
            return k1, k2
        k2 *= 1.01
    raise CoercivityError(f"no k2 <= {_K2_CEILING:g} certifies the quartic lower bound")
