"""Observables of a run: energies, dissipation, mean laws, separation, stationarity."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from . import kernels
from .dynamics import CONSERVED, ModelParams, State, bulk_energy_terms, chemical_potentials
from .potential import hessian


@dataclass(frozen=True)
class EnergyBreakdown:
    grad_u: float
    grad_v: float
    bulk: float
    nonlocal_: float

    @property
    def psi(self) -> float:
        return self.grad_u + self.grad_v + self.bulk

    @property
    def psi_tilde(self) -> float:
        return self.psi + self.nonlocal_


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mean_u: float
    mean_v: float
    psi: float
    psi_tilde: float
    grad_mu_norm: float
    grad_phit_norm: float
    omega_u: float
    omega_v: float
    dt_effective: float
    energy_residual: float

    @property
    def regularized_region(self) -> bool:
        """True if some order parameter left the open interval (-1, 1)."""
        return self.omega_u <= 0.0 or self.omega_v <= 0.0


RECORD_FIELDS = tuple(f.name for f in fields(DiagnosticsRecord))


@dataclass(frozen=True)
class StationarityReport:
    is_stationary: bool
    mu_infty: float
    phi_infty: float
    residual_mu: float
    residual_phi: float
    grad_sum: float


def energy(s: State, p: ModelParams) -> EnergyBreakdown:
    g = s.grid
    fsum, _, _ = kernels.potential_terms(s.u, s.v, p.potential.as_tuple())
    return EnergyBreakdown(*bulk_energy_terms(g, g.dct(s.u), g.dct(s.v), fsum, p))


def dissipation(s: State, p: ModelParams) -> tuple[float, float]:
    """``(||grad mu||, ||grad phi_tilde||)``; ``phi`` replaces ``phi_tilde`` off-critically."""
    mu, _, phi_t = chemical_potentials(s, p)
    return s.grid.h1_seminorm(mu), s.grid.h1_seminorm(phi_t)


def energy_identity_residual(prev: State, next: State, p: ModelParams, dt: float) -> float:
    """``(E(next) - E(prev))/dt`` plus the averaged dissipation rate of both end points."""
    if p.mode != CONSERVED:
        raise ValueError("the energy identity only holds in conserved mode")
    d0 = sum(x * x for x in dissipation(prev, p))
    d1 = sum(x * x for x in dissipation(next, p))
    e0 = energy(prev, p).psi_tilde
    e1 = energy(next, p).psi_tilde
    return (e1 - e0) / dt + 0.5 * (d0 + d1)


def separation(s: State) -> tuple[float, float]:
    return 1.0 - float(np.max(np.abs(s.u))), 1.0 - float(np.max(np.abs(s.v)))


def record(prev: State | None, cur: State, p: ModelParams, dt_effective: float) -> DiagnosticsRecord:
    e = energy(cur, p)
    gm, gp = dissipation(cur, p)
    ou, ov = separation(cur)
    res = math.nan
    if prev is not None and p.mode == CONSERVED and dt_effective > 0:
        res = energy_identity_residual(prev, cur, p, dt_effective)
    return DiagnosticsRecord(t=cur.t, mean_u=cur.grid.mean(cur.u), mean_v=cur.grid.mean(cur.v),
                             psi=e.psi, psi_tilde=e.psi_tilde, grad_mu_norm=gm, grad_phit_norm=gp,
                             omega_u=ou, omega_v=ov, dt_effective=dt_effective, energy_residual=res)


def stationarity(s: State, p: ModelParams, tol: float) -> StationarityReport:
    """Check that both chemical potentials are spatially constant."""
    g = s.grid
    mu, _, phi_t = chemical_potentials(s, p)
    mu_inf, phi_inf = g.mean(mu), g.mean(phi_t)
    r_mu, r_phi = float(np.std(mu)), float(np.std(phi_t))
    grad_sum = g.h1_seminorm(mu) + g.h1_seminorm(phi_t)
    ok = (grad_sum < tol and r_mu < tol * (1.0 + abs(mu_inf)) and r_phi < tol * (1.0 + abs(phi_inf)))
    return StationarityReport(bool(ok), mu_inf, phi_inf, r_mu, r_phi, grad_sum)


def dissipative_bound_witness(series, p: ModelParams) -> float:
    """Smallest ``C`` with ``Psi(t) + 1/2 int_t^{t+1} D <= Psi(t0) exp(-sigma (t - t0)) + C`` on the records.

    ``D = ||grad mu||^2 + ||grad phi||^2``; the window integral uses the trapezoid rule
    on the records, interpolated at ``t + 1``.
    """
    t = np.array([r.t for r in series], dtype=float)
    if len(t) < 2 or t[-1] - t[0] < 1.0:
        raise ValueError("series must span at least one time unit")
    psi = np.array([r.psi for r in series])
    d = np.array([r.grad_mu_norm ** 2 + r.grad_phit_norm ** 2 for r in series])
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (d[1:] + d[:-1]) * np.diff(t))))
    ok = t + 1.0 <= t[-1] + 1e-12 * max(1.0, abs(t[-1]))
    window = np.interp(t[ok] + 1.0, t, cum) - cum[ok]
    lhs = psi[ok] + 0.5 * window
    rhs = psi[0] * np.exp(-p.sigma * (t[ok] - t[0]))
    return float(np.max(lhs - rhs))


def mean_trajectory_error(series, p: ModelParams) -> tuple[float, float]:
    """Max deviation of ``mean_v`` from ``c + exp(-sigma t)(v0 - c)`` and the one-step recurrence residual.

    The recurrence residual is taken over consecutive records one step apart
    (``nan`` if there are none).
    """
    t0, v0 = series[0].t, series[0].mean_v
    c = v0 if p.mode == CONSERVED else p.c
    err = max(abs(r.mean_v - (c + math.exp(-p.sigma * (r.t - t0)) * (v0 - c))) for r in series)
    rec = math.nan
    for a, b in zip(series[:-1], series[1:]):
        h = b.dt_effective
        if h > 0 and abs((b.t - a.t) - h) <= 1e-9 * h:
            r = abs(b.mean_v * (1.0 + h * p.sigma) - a.mean_v - h * p.sigma * c)
            rec = r if math.isnan(rec) else max(rec, r)
    return err, rec


def continuous_dependence_probe(run1, run2) -> tuple[np.ndarray, float]:
    """Per-time ``||u1 - u2||_-1 + ||v1 - v2||_-1`` and the ratio of its maximum to the initial gap."""
    if len(run1) != len(run2):
        raise ValueError("runs have different lengths")
    gaps = []
    for a, b in zip(run1, run2):
        if a.grid != b.grid or abs(a.t - b.t) > 1e-12 * max(1.0, abs(a.t)):
            raise ValueError(f"misaligned states at t={a.t} vs t={b.t}")
        g = a.grid
        gaps.append(g.minus_one_norm(a.u - b.u) + g.minus_one_norm(a.v - b.v))
    gaps = np.array(gaps)
    g0, gmax = gaps[0], gaps.max()
    if g0 > 0:
        ratio = gmax / g0
    else:
        ratio = 0.0 if gmax == 0 else math.inf
    return gaps, float(ratio)


def linear_growth_rates(p: ModelParams, u_bar: float, v_bar: float, lam: float):
    """Mode matrix of the dynamics linearized about constants and its sorted eigenvalues."""
    knot = 1.0 - p.potential.delta
    if abs(u_bar) >= knot or abs(v_bar) >= knot:
        raise ValueError("linearization point must lie in the unregularized region")
    fuu, fuv, fvv = hessian(u_bar, v_bar, p.potential)
    h = np.array([[fuu, fuv], [fuv, fvv]])
    m = -lam * (np.diag([p.eps_u_sq * lam, p.eps_v_sq * lam]) + h) - np.diag([0.0, p.sigma])
    return m, np.sort(np.linalg.eigvalsh(m))
