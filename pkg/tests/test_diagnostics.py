import math
from dataclasses import replace

import numpy as np
import pytest

from polyblend import diagnostics as dg
from polyblend.dynamics import ModelParams, State, StepperConfig, initial_state, run
from polyblend.potential import PotentialParams, f_delta, hat_s_deriv
from polyblend.spectral import Grid


def const_state(g, u, v, t=0.0):
    return State(g, np.full(g.shape, u), np.full(g.shape, v), t)


def test_energy_constant_state(ref_model):
    g = Grid(16, 16, 1.0, 2.0)
    e = dg.energy(const_state(g, 0.2, -0.1), ref_model)
    assert e.grad_u == 0.0 and e.grad_v == 0.0
    assert e.nonlocal_ == pytest.approx(0.0, abs=1e-30)
    assert e.psi == pytest.approx(2.0 * f_delta(0.2, -0.1, ref_model.potential), rel=1e-13)


def test_energy_single_mode_gradient(ref_model):
    g = Grid(32, 16, 2.0, 1.0)
    x, _ = g.coords()
    a = 0.1
    f = a * np.cos(math.pi * x / g.lx)
    e = dg.energy(State(g, f, np.zeros(g.shape)), ref_model)
    assert e.grad_u == pytest.approx(0.5 * ref_model.eps_u_sq * (math.pi / g.lx) ** 2 * g.l2_norm(f) ** 2, rel=1e-12)
    assert e.grad_v == 0.0


def test_nonlocal_term(ref_model):
    g = Grid(24, 24)
    s = initial_state(g, "constant_plus_noise", 0.1, 0.2, 0.1, seed=8)
    e = dg.energy(s, ref_model)
    assert e.psi_tilde - e.psi == pytest.approx(0.5 * ref_model.sigma * g.star_norm(s.v - g.mean(s.v)) ** 2,
                                                rel=1e-10)
    assert e.psi_tilde >= e.psi


def test_identity_residual_stationary(ref_model):
    g = Grid(16, 16)
    s = const_state(g, 0.1, 0.0)
    assert dg.energy_identity_residual(s, s, ref_model, 1e-3) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        dg.energy_identity_residual(s, s, replace(ref_model, mode="off_critical"), 1e-3)


def test_dissipative_witness_constant_series(ref_model):
    g = Grid(16, 16)
    s = const_state(g, 0.1, 0.0)
    rec = dg.record(None, s, ref_model, 0.0)
    ts = np.linspace(0.0, 3.0, 31)
    series = [replace(rec, t=t) for t in ts]
    c = dg.dissipative_bound_witness(series, ref_model)
    valid = ts[ts <= 2.0 + 1e-12]
    expected = max(rec.psi * (1.0 - math.exp(-ref_model.sigma * t)) for t in valid)
    assert c == pytest.approx(expected, rel=1e-12, abs=1e-15)
    p0 = replace(ref_model, sigma=0.0)
    assert dg.dissipative_bound_witness(series, p0) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        dg.dissipative_bound_witness(series[:5], ref_model)


def test_mean_trajectory_conserved(ref_model):
    g = Grid(16, 16)
    s0 = initial_state(g, "constant_plus_noise", 0.0, 0.2, 0.05, seed=1)
    res = run(s0, ref_model, StepperConfig(dt=1e-3), 0.05, diag_every=1, keep_records=True)
    err, rec = dg.mean_trajectory_error([dg.record(None, s0, ref_model, 0.0)] + res.records, ref_model)
    assert err <= 1e-12 and rec <= 1e-12


def test_mean_trajectory_off_critical(ref_potential):
    g = Grid(16, 16)
    p = ModelParams(1e-3, 1e-3, 1.0, -0.2, "off_critical", ref_potential)
    s0 = initial_state(g, "constant_plus_noise", 0.0, 0.3, 0.05, seed=1)
    res = run(s0, p, StepperConfig(dt=1e-2), 1.0, diag_every=1, keep_records=True)
    err, rec = dg.mean_trajectory_error([dg.record(None, s0, p, 0.0)] + res.records, p)
    assert rec <= 1e-12
    # backward Euler lag: first order in dt, well below the amplitude 0.5
    assert 1e-4 < err < 1e-2


def test_separation():
    g = Grid(16, 16)
    assert dg.separation(const_state(g, 0.3, -0.6)) == pytest.approx((0.7, 0.4))
    s = initial_state(g, "constant_plus_noise", 0.5, -0.5, 0.498 - 1e-12, seed=1, delta=1e-3)
    ou, ov = dg.separation(s)
    assert ou >= 2e-3 and ov >= 2e-3


def test_regularized_flag(ref_model):
    g = Grid(16, 16)
    assert not dg.record(None, const_state(g, 0.3, 0.3), ref_model, 0.0).regularized_region
    assert dg.record(None, const_state(g, 1.02, 0.3), ref_model, 0.0).regularized_region


def test_stationarity(ref_model):
    g = Grid(16, 16)
    rep = dg.stationarity(const_state(g, 0.2, -0.1), ref_model, 1e-10)
    assert rep.is_stationary
    assert rep.mu_infty == pytest.approx(f_delta(0.2, -0.1, ref_model.potential, "du"), rel=1e-13)
    s = initial_state(g, "constant_plus_noise", 0.2, -0.1, 0.05, seed=1)
    assert not dg.stationarity(s, ref_model, 1e-6).is_stationary


def test_continuous_dependence_probe():
    g = Grid(16, 16)
    a = [const_state(g, 0.1, 0.0, t) for t in (0.0, 0.5)]
    gaps, ratio = dg.continuous_dependence_probe(a, a)
    assert np.all(gaps == 0.0) and ratio == 0.0
    b = [const_state(g, 0.1 + 1e-3, 0.0, t) for t in (0.0, 0.5)]
    gaps, ratio = dg.continuous_dependence_probe(a, b)
    assert gaps[0] == pytest.approx(1e-3, rel=1e-10)
    assert ratio == pytest.approx(1.0)
    with pytest.raises(ValueError):
        dg.continuous_dependence_probe(a, b[::-1])
    with pytest.raises(ValueError):
        dg.continuous_dependence_probe(a, b[:1])


def test_linear_growth_rates_decoupled():
    p = ModelParams(2e-3, 1e-3, 0.7, 0.0, "conserved", PotentialParams(1.0, 2.0, 1.5, 2.5))
    lam, ub, vb = 9.0, 0.3, -0.2
    _, eig = dg.linear_growth_rates(p, ub, vb, lam)
    r1 = -lam * (p.eps_u_sq * lam + hat_s_deriv(ub, 1.0, 2) - 2.0)
    r2 = -lam * (p.eps_v_sq * lam + hat_s_deriv(vb, 1.5, 2) - 2.5) - 0.7
    assert eig == pytest.approx(sorted([r1, r2]), rel=1e-12)
    _, eig0 = dg.linear_growth_rates(p, ub, vb, 0.0)
    assert eig0 == pytest.approx([-0.7, 0.0], abs=1e-15)


def test_linear_growth_rates_symmetric_coupling():
    p = ModelParams(potential=PotentialParams(alpha=0.8))
    m, eig = dg.linear_growth_rates(p, 0.1, 0.1, 20.0)
    assert np.allclose(m, m.T)
    assert np.all(np.isreal(eig))
    assert eig == pytest.approx(np.sort(np.linalg.eigvals(m).real), rel=1e-12)
    with pytest.raises(ValueError):
        dg.linear_growth_rates(p, 0.9999, 0.0, 1.0)


def test_record_fields_order():
    assert dg.RECORD_FIELDS == ("t", "mean_u", "mean_v", "psi", "psi_tilde", "grad_mu_norm", "grad_phit_norm",
                                "omega_u", "omega_v", "dt_effective", "energy_residual")
