"""Stabilized first-order IMEX integration of the coupled Cahn-Hilliard / Cahn-Hilliard-Oono system.

Per step, in cosine space (``lam`` the Neumann eigenvalue of a mode)::

    (1 + dt k lam + dt e2 lam^2) u+ = (1 + dt k lam) u - dt lam dF/du(u, v)
    (1 + dt s + dt k lam + dt e2 lam^2) v+ = (1 + dt k lam) v - dt lam dF/dv(u, v) + dt s c

with the ``dt s c`` source on the constant mode only. The nonlinearity is the
Taylor-regularized potential ``F_delta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from . import kernels
from .potential import PotentialParams, f_delta
from .spectral import Grid

CONSERVED = "conserved"
OFF_CRITICAL = "off_critical"
GUARD_RTOL = 1e-10


class StepError(RuntimeError):
    pass


class NonFiniteStateError(StepError):
    pass


class EnergyGuardError(StepError):
    def __init__(self, increment: float, dt: float):
        super().__init__(f"energy guard exhausted retries; last energy increment {increment:.3e} at dt={dt:.3e}")
        self.increment = increment
        self.dt = dt


@dataclass(frozen=True)
class ModelParams:
    eps_u_sq: float = 1e-3
    eps_v_sq: float = 1e-3
    sigma: float = 0.5
    c: float = 0.0
    mode: str = CONSERVED
    potential: PotentialParams = field(default_factory=PotentialParams)

    def __post_init__(self):
        if not (self.eps_u_sq > 0 and self.eps_v_sq > 0):
            raise ValueError(f"need eps_u_sq, eps_v_sq > 0, got {self.eps_u_sq}, {self.eps_v_sq}")
        if not self.sigma >= 0:
            raise ValueError(f"need sigma >= 0, got {self.sigma}")
        if not abs(self.c) < 1:
            raise ValueError(f"need |c| < 1, got {self.c}")
        if self.mode not in (CONSERVED, OFF_CRITICAL):
            raise ValueError(f"mode must be {CONSERVED!r} or {OFF_CRITICAL!r}, got {self.mode!r}")


@dataclass(frozen=True)
class StepperConfig:
    dt: float = 1e-4
    kappa_u: float | None = None
    kappa_v: float | None = None
    max_retries: int = 8
    recompute_interval: int = 1
    guard: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"need dt > 0, got {self.dt}")
        if self.max_retries < 0:
            raise ValueError(f"need max_retries >= 0, got {self.max_retries}")
        if self.recompute_interval < 1:
            raise ValueError(f"need recompute_interval >= 1, got {self.recompute_interval}")
        for k in (self.kappa_u, self.kappa_v):
            if k is not None and not k >= 0:
                raise ValueError(f"stabilization constants must be >= 0, got {k}")


@dataclass(frozen=True, eq=False)
class State:
    grid: Grid
    u: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        for name in ("u", "v"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != self.grid.shape:
                raise ValueError(f"{name} has shape {arr.shape}, grid is {self.grid.shape}")
            object.__setattr__(self, name, arr)

    @property
    def sup(self) -> float:
        return float(max(np.max(np.abs(self.u)), np.max(np.abs(self.v))))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v)))


def chemical_potentials(s: State, p: ModelParams):
    """Return ``(mu, phi, phi_tilde)``.

    ``phi_tilde = phi + sigma N(v - mean v)`` in conserved mode, ``phi`` otherwise.
    """
    g = s.grid
    pot = p.potential
    mu = -p.eps_u_sq * g.laplacian(s.u) + np.asarray(f_delta(s.u, s.v, pot, "du"))
    phi = -p.eps_v_sq * g.laplacian(s.v) + np.asarray(f_delta(s.u, s.v, pot, "dv"))
    if p.mode == CONSERVED:
        phi_t = phi + p.sigma * g.inv_neumann_laplacian_projected(s.v)
    else:
        phi_t = phi
    return mu, phi, phi_t


def auto_stabilization(s: State, p: ModelParams) -> tuple[float, float]:
    """Stabilization constants ``(kappa_u, kappa_v)`` for the current iterate range.

    Each is at least the negative part of the smallest Hessian eigenvalue over the
    grid plus ``theta_0u + theta_0v``, and at least half the row-wise Gershgorin bound
    on the positive curvature (with a 10% margin), which keeps the explicit
    convex part from increasing the energy near the pure phases.
    """
    pot = p.potential
    lam_min, top_u, top_v = kernels.hessian_bounds(s.u, s.v, pot.as_tuple())
    base = max(0.0, -lam_min) + pot.theta_0u + pot.theta_0v
    return max(base, 0.55 * top_u), max(base, 0.55 * top_v)


def bulk_energy_terms(grid: Grid, uh, vh, fsum: float, p: ModelParams) -> tuple[float, float, float, float]:
    """``(grad_u, grad_v, bulk, nonlocal)`` energies from cosine coefficients and the summed density."""
    grad_u = 0.5 * p.eps_u_sq * grid.h1_seminorm_hat(uh) ** 2
    grad_v = 0.5 * p.eps_v_sq * grid.h1_seminorm_hat(vh) ** 2
    bulk = fsum * grid.cell_area
    nonlocal_ = 0.5 * p.sigma * grid.star_norm_hat(vh) ** 2
    return grad_u, grad_v, bulk, nonlocal_


class Stepper:
    """Owns the per-run scheme state: stabilization, target mean and cached transforms."""

    def __init__(self, params: ModelParams, cfg: StepperConfig, c: float | None = None):
        self.params = params
        self.cfg = cfg
        self._pars = params.potential.as_tuple()
        self.c = c if c is not None else (None if params.mode == CONSERVED else params.c)
        self.kappa = (cfg.kappa_u, cfg.kappa_v)
        self.steps = 0
        self.retries = 0
        self.last_dt = float("nan")
        self.last_increment = 0.0
        self._cache_key = None
        self._cache = None

    def _prepare(self, s: State):
        # coefficients, summed density, partials and energy of the current state
        if self._cache_key is s:
            return self._cache
        g = s.grid
        uh, vh = g.dct(s.u), g.dct(s.v)
        fsum, du, dv = kernels.potential_terms(s.u, s.v, self._pars)
        energy = sum(bulk_energy_terms(g, uh, vh, fsum, self.params))
        self._cache_key = s
        self._cache = (uh, vh, g.dct(du), g.dct(dv), energy)
        return self._cache

    def _kappas(self, s: State) -> tuple[float, float]:
        ku, kv = self.cfg.kappa_u, self.cfg.kappa_v
        if ku is not None and kv is not None:
            return ku, kv
        if self.steps % self.cfg.recompute_interval == 0 or self.kappa[0] is None or self.kappa[1] is None:
            auto = auto_stabilization(s, self.params)
            self.kappa = (auto[0] if ku is None else ku, auto[1] if kv is None else kv)
        return self.kappa

    def _advance(self, s: State, dt: float, ku: float, kv: float):
        p = self.params
        g = s.grid
        lam = g.eigenvalues
        uh, vh, duh, dvh, _ = self._prepare(s)
        sig = p.sigma
        ru = (1.0 + dt * ku * lam) * uh - dt * lam * duh
        rv = (1.0 + dt * kv * lam) * vh - dt * lam * dvh
        rv[0, 0] += dt * sig * self.c * math.sqrt(g.nx * g.ny)
        uh_new = ru / (1.0 + dt * ku * lam + dt * p.eps_u_sq * lam * lam)
        vh_new = rv / (1.0 + dt * sig + dt * kv * lam + dt * p.eps_v_sq * lam * lam)
        u_new = g.idct(uh_new)
        v_new = g.idct(vh_new)
        new = State(g, u_new, v_new, s.t + dt)
        if not new.is_finite():
            raise NonFiniteStateError(f"non-finite state at t={new.t:.6g}")
        fsum, du, dv = kernels.potential_terms(u_new, v_new, self._pars)
        energy = sum(bulk_energy_terms(g, uh_new, vh_new, fsum, p))
        return new, (uh_new, vh_new, g.dct(du), g.dct(dv), energy)

    def step(self, s: State, dt: float | None = None) -> State:
        """Advance one step of size ``dt`` (default ``cfg.dt``), halving on energy-guard failure."""
        if not s.is_finite():
            raise NonFiniteStateError(f"non-finite state at t={s.t:.6g}")
        if self.c is None:
            self.c = s.grid.mean(s.v)
        dt = self.cfg.dt if dt is None else dt
        ku, kv = self._kappas(s)
        e_old = self._prepare(s)[4]
        guarded = self.cfg.guard and self.params.mode == CONSERVED
        tries = 0
        while True:
            new, cache = self._advance(s, dt, ku, kv)
            inc = cache[4] - e_old
            self.last_increment = inc
            if not guarded or inc <= GUARD_RTOL * (1.0 + abs(e_old)):
                break
            if tries >= self.cfg.max_retries:
                raise EnergyGuardError(inc, dt)
            tries += 1
            dt *= 0.5
        self.retries += tries
        self.steps += 1
        self.last_dt = dt
        self._cache_key = new
        self._cache = cache
        return new

    def energy(self, s: State) -> float:
        """Modified energy (gradient + bulk + nonlocal) as used by the guard."""
        return self._prepare(s)[4]


def step(s: State, p: ModelParams, cfg: StepperConfig) -> State:
    """One step with a throwaway :class:`Stepper`; conserved mode takes ``c`` from ``s``."""
    return Stepper(p, cfg).step(s)


# ---------------------------------------------------------------------------
# initial data

CONSTANT_PLUS_NOISE = "constant_plus_noise"
TWO_MODE = "two_mode"
FROM_SNAPSHOT = "from_snapshot"


def seeded_noise(grid: Grid, seed: int, amplitude: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-mean noise pair with sup norm exactly ``amplitude`` (independent u and v streams)."""
    out = []
    for child in np.random.SeedSequence(seed).spawn(2):
        eta = np.random.default_rng(child).uniform(-1.0, 1.0, size=grid.shape)
        eta -= eta.mean()
        peak = np.max(np.abs(eta))
        out.append(eta * (amplitude / peak) if peak > 0 else np.zeros(grid.shape))
    return out[0], out[1]


def initial_state(grid: Grid, kind: str = CONSTANT_PLUS_NOISE, u_mean: float = 0.0, v_mean: float = 0.0,
                  amplitude: float = 0.0, seed: int = 0, delta: float = 1e-3,
                  snapshot: str | None = None) -> State:
    if kind == FROM_SNAPSHOT:
        from .io import read_snapshot
        if snapshot is None:
            raise ValueError("from_snapshot initial data needs a snapshot path")
        s = read_snapshot(snapshot)
        if s.grid.shape != grid.shape or (s.grid.lx, s.grid.ly) != (grid.lx, grid.ly):
            raise ValueError("snapshot grid does not match configured grid")
        return State(grid, s.u, s.v, s.t)
    if amplitude < 0:
        raise ValueError(f"amplitude must be >= 0, got {amplitude}")
    for name, m in (("u_mean", u_mean), ("v_mean", v_mean)):
        if abs(m) + amplitude > 1.0 - 2.0 * delta:
            raise ValueError(f"|{name}| + amplitude = {abs(m) + amplitude:g} exceeds 1 - 2*delta = {1 - 2 * delta:g}")
    if kind == CONSTANT_PLUS_NOISE:
        nu, nv = seeded_noise(grid, seed, amplitude)
    elif kind == TWO_MODE:
        x, y = grid.coords()
        nu = amplitude * np.cos(np.pi * x / grid.lx)
        nv = amplitude * np.cos(np.pi * y / grid.ly)
    else:
        raise ValueError(f"unknown initial state kind {kind!r}")
    return State(grid, u_mean + nu, v_mean + nv, 0.0)


# ---------------------------------------------------------------------------
# driver

TIME_REACHED = "time_reached"
STATIONARY = "stationary"
ERROR = "error"
STEP_LIMIT = "step_limit"


@dataclass
class RunResult:
    state: State
    reason: str
    steps: int
    retries: int
    records: list = field(default_factory=list)
    error: Exception | None = None


def run(s0: State, p: ModelParams, cfg: StepperConfig, t_end: float,
        on_record: Callable | None = None, on_snapshot: Callable[[State], None] | None = None,
        diag_every: int = 0, snapshot_every: int = 0, stationarity_tol: float | None = None,
        max_steps: int | None = None, keep_records: bool = False, raise_errors: bool = True,
        stepper: Stepper | None = None) -> RunResult:
    """Integrate from ``s0`` to ``t_end``.

    A diagnostics record is produced after step ``i`` when ``i % diag_every == 0``
    or ``i`` is the last step, so ``n`` steps yield ``ceil(n / diag_every)`` records.
    With ``stationarity_tol`` set, the run stops at the first record whose state
    passes :func:`polyblend.diagnostics.stationarity`.
    """
    from . import diagnostics

    if t_end < s0.t:
        raise ValueError(f"t_end={t_end} is before the initial time {s0.t}")
    stepper = stepper or Stepper(p, cfg)
    records = []
    state = s0
    reason = TIME_REACHED
    nsteps = 0
    tol_t = 1e-12 * max(1.0, abs(t_end)) if math.isfinite(t_end) else 0.0
    need_record = diag_every > 0 or stationarity_tol is not None
    every = diag_every if diag_every > 0 else 1

    def _emit(prev, cur):
        rec = diagnostics.record(prev, cur, p, stepper.last_dt)
        if keep_records:
            records.append(rec)
        if on_record is not None and diag_every > 0:
            on_record(rec)

    try:
        while t_end - state.t > tol_t:
            if max_steps is not None and nsteps >= max_steps:
                reason = STEP_LIMIT
                break
            remaining = t_end - state.t
            # a remainder equal to dt up to roundoff still takes the nominal dt
            h = cfg.dt if remaining > cfg.dt * (1.0 - 1e-9) else remaining
            prev = state
            state = stepper.step(prev, h)
            if abs(t_end - state.t) <= tol_t:
                state = replace(state, t=t_end) if state.t != t_end else state
                stepper._cache_key = state
            nsteps += 1
            last = t_end - state.t <= tol_t
            if need_record and (nsteps % every == 0 or last):
                _emit(prev, state)
                if stationarity_tol is not None:
                    rep = diagnostics.stationarity(state, p, stationarity_tol)
                    if rep.is_stationary:
                        reason = STATIONARY
                        break
            if on_snapshot is not None and snapshot_every > 0 and nsteps % snapshot_every == 0:
                on_snapshot(state)
    except StepError as exc:
        if raise_errors:
            raise
        return RunResult(state, ERROR, nsteps, stepper.retries, records, exc)
    return RunResult(state, reason, nsteps, stepper.retries, records)


def iterate(s0: State, p: ModelParams, cfg: StepperConfig, nsteps: int,
            stepper: Stepper | None = None) -> Iterable[State]:
    """Yield the states after each of ``nsteps`` fixed steps."""
    stepper = stepper or Stepper(p, cfg)
    s = s0
    for _ in range(nsteps):
        s = stepper.step(s)
        yield s
