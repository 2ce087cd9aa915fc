"""Acceptance criteria, each run at its stated tolerance and time budget.

Every test records one PASS/FAIL line, collected in the terminal summary.
Criteria that the stated constants or models cannot meet are marked
``xfail(strict=True)``: the assertion is the real one and the FAIL line is
still printed.
"""
import math
import time

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from hypostrat import linear_mode as lm
from hypostrat import multipliers as mp
from hypostrat import norms
from hypostrat import spectral as sp
from hypostrat.params import PhysParams, check_smallness, default_constants

from oracles import brute_convolution

VISCOUS = PhysParams(0.01, 0.01, 1.0, 0.1)


@pytest.mark.xfail(strict=True, reason="the explicit constants violate the third smallness condition")
def test_ac1_constant_admissibility(report_line):
    t0 = time.perf_counter()
    failed, worst = 0, math.inf
    for R in np.linspace(0.26, 100.0, 20):
        for eps in np.linspace(0.01, 0.49, 20):
            rep = check_smallness(default_constants(R, eps), R, eps)
            failed += not rep.passed
            worst = min(worst, rep.tau_margin, rep.alpha_margin, rep.beta_margin)
    elapsed = time.perf_counter() - t0
    ok = failed == 0 and elapsed < 1.0
    report_line("AC1", ok, f"{failed}/400 grid points fail, smallest margin {worst:.3g}, {elapsed:.2f}s")
    assert ok


def test_ac2_lyapunov_certification(report_line):
    consts = default_constants(1.0, 0.1)
    t0 = time.perf_counter()
    rep = lm.certify_grid(VISCOUS, consts, np.logspace(-3, 1, 16), np.linspace(-50, 50, 33),
                          (0.0, 200.0), slack=1e-10)
    elapsed = time.perf_counter() - t0
    ok = (rep.n_states == 12 and rep.c_certified >= 1e-4 and rep.margins_ok
          and rep.integrated_ok and not rep.failures and elapsed < 300)
    report_line("AC2", ok, f"c = {rep.c_certified:.4g}, worst margin {rep.worst_margin.max():.3g}, "
                f"integrated ratio {rep.integrated_ratio.max():.6f}, {elapsed:.1f}s")
    assert ok


def test_ac3_enhanced_dissipation_rate(report_line):
    t0 = time.perf_counter()
    res = lm.sweep_rates(VISCOUS, [0.25, 0.5, 1.0, 2.0, 4.0])
    elapsed = time.perf_counter() - t0
    ratios = np.array([r.ratio for r in res])
    ok = (all(r.ok for r in res) and np.all((ratios >= 1 / 20) & (ratios <= 20))
          and ratios.max() / ratios.min() <= 3 and elapsed < 60)
    report_line("AC3", ok, f"r/lambda = {np.round(ratios, 3).tolist()}, "
                f"max/min {ratios.max() / ratios.min():.3f}, {elapsed:.1f}s")
    assert ok


@pytest.mark.xfail(strict=True, reason="the low-frequency decay rate is about 4.6 k^2/nu, outside the factor-3 band")
def test_ac4_taylor_dispersion_rate(report_line):
    t0 = time.perf_counter()
    res = lm.sweep_rates(VISCOUS, [0.001, 0.002, 0.004])
    elapsed = time.perf_counter() - t0
    ratios = np.array([r.rate / (r.k ** 2 / VISCOUS.nu) for r in res])
    ok = all(r.ok for r in res) and np.all((ratios >= 1 / 3) & (ratios <= 3)) and elapsed < 60
    report_line("AC4", ok, f"rate/(k^2/nu) = {np.round(ratios, 3).tolist()}, {elapsed:.1f}s")
    assert ok


def test_ac5_inviscid_damping_exponents(report_line):
    params = PhysParams.inviscid(1.0)
    consts = default_constants(1.0, 0.1)
    cfg = sp.FieldConfig(nk=128, neta=256, dk=0.1, deta=0.1, recipe="gaussian", k0=1.0,
                         width_k=0.3, width_eta=1.0, zeta=1e-3, theta_ratio=1.0)
    t0 = time.perf_counter()
    fld = sp.init_field(cfg, params, consts)
    ts = np.concatenate([[0.0], np.geomspace(1.0, 200.0, 120)])
    spec = norms.NormSpec("V", n=0, m=1, mu=0.0)
    series = {"dxu1": [], "u2": [], "growth": []}
    for g in sp.linear_evolution(fld, ts):
        q = norms.theorem_quantities(g.omega_hat, g.theta_hat, g.grid.k, g.grid.eta, g.t,
                                     spec, params.richardson)
        for name in series:
            series[name].append(q[name])
    slopes = {name: norms.fit_power(ts, np.array(v), window=(20.0, 200.0)).exponent
              for name, v in series.items()}
    elapsed = time.perf_counter() - t0
    ok = (abs(slopes["dxu1"] + 0.5) <= 0.15 and abs(slopes["u2"] + 1.5) <= 0.2
          and abs(slopes["growth"] - 0.5) <= 0.15 and elapsed < 300)
    report_line("AC5", ok, ", ".join(f"{k} {v:+.3f}" for k, v in slopes.items()) + f", {elapsed:.1f}s")
    assert ok


def test_ac6_single_mode_consistency(report_line):
    consts = default_constants(1.0, 0.1)
    cfg = sp.FieldConfig(nk=16, neta=16, dk=0.25, deta=0.5, recipe="single", k0=0.5, eta0=1.0,
                         amplitude=1.0, theta_ratio=0.3 + 0.2j)
    t0 = time.perf_counter()
    fld = sp.init_field(cfg, VISCOUS, consts)
    K, H = fld.grid.mesh()
    (l,), (j,) = np.nonzero((K == 0.5) & (H == 1.0))
    z0, q0 = (a[l, j] for a in sp.symmetrize(fld))
    ts, zs, qs = [0.0], [z0], [q0]
    nl_max = 0.0
    while fld.t < 50.0 - 1e-9:
        co, ct = sp.nonlinear_term(fld)
        scale = np.abs(fld.omega_hat).max() + np.abs(fld.theta_hat).max()
        nl_max = max(nl_max, (np.abs(co).max() + np.abs(ct).max()) / scale)
        fld = sp.step(fld, 0.1)
        Z, Q = sp.symmetrize(fld)
        ts.append(fld.t)
        zs.append(Z[l, j])
        qs.append(Q[l, j])
    ref = lm.integrate_mode(lm.ModeState(0.5, 1.0, 0.0, z0, q0), VISCOUS, 50.0, tol=1e-12,
                            t_eval=np.array(ts))
    err = np.max(np.abs(np.array(zs) - ref.z) + np.abs(np.array(qs) - ref.q))
    err /= np.max(np.abs(ref.z) + np.abs(ref.q))
    elapsed = time.perf_counter() - t0
    # the nonlinearity vanishes identically; what remains is FFT rounding
    ok = err <= 1e-6 and nl_max <= 1e-14 and elapsed < 10
    report_line("AC6", ok, f"relative error {err:.3g}, relative nonlinear term {nl_max:.1g}, {elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_ac7_bootstrap_monotonicity(report_line):
    params = PhysParams(0.02, 0.02, 1.0, 0.1)
    t0 = time.perf_counter()
    cert = lm.certify_grid(params, default_constants(1.0, 0.1), np.logspace(-3, 1, 16),
                           np.linspace(-50, 50, 33), (0.0, 200.0))
    assert cert.passed
    consts = cert.store(default_constants(1.0, 0.1))
    delta_star = 0.05
    cfg = sp.FieldConfig(nk=256, neta=512, dk=0.0025, deta=0.05, recipe="gaussian", k0=0.05,
                         width_k=0.03, width_eta=1.0, zeta=0.05 * params.mu ** (0.5 + delta_star),
                         theta_ratio=0.5j, taylor=True)
    fld = sp.init_field(cfg, params, consts)
    ledger = sp.EnergyLedger(c=consts.c)
    ledger.append(sp.ledger_update(fld))
    while fld.t < 200.0 - 1e-9:
        fld = sp.step(fld, 0.25, h_lin=0.05)
        ledger.append(sp.ledger_update(fld))
    mon = sp.bootstrap_monitor(ledger, slack=1e-3)
    elapsed = time.perf_counter() - t0
    ok = mon.passed and elapsed < 1800
    report_line("AC7", ok, f"c = {consts.c:.4g}, max relative excess {mon.max_excess:.3g}, "
                f"edge fraction {sp.edge_fraction(fld):.1g}, {elapsed:.0f}s")
    assert ok


def _fd_energy_rate(state, consts, params):
    # central differences at h and h/2 along accurate solves, Richardson-extrapolated
    p, _ = mp.eval_p(state.k, state.eta, state.t)
    h = 1e-2 / max(1.0, abs(state.k) * math.sqrt(p), params.nu * p)
    fwd = lm.integrate_mode(state, params, state.t + h, tol=1e-13,
                            t_eval=[state.t, state.t + h / 2, state.t + h])
    bwd = lm.integrate_mode(state, params, state.t - h, tol=1e-13,
                            t_eval=[state.t, state.t - h / 2, state.t - h])
    e = lambda tr, i: lm.energy_k(tr.state(i), consts, params)
    d_half = (e(fwd, 1) - e(bwd, 1)) / h
    d_full = (e(fwd, 2) - e(bwd, 2)) / (2 * h)
    return (4 * d_half - d_full) / 3


def test_ac8_oracle_equivalences(report_line):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    consts = default_constants(1.0, 0.1)
    params = PhysParams(0.02, 0.02, 1.0, 0.1)

    # spectral convolution against the direct double sum
    grid = sp.Lattice(8, 8, 0.5, 0.5)
    K, _ = grid.mesh()
    def draw():
        a = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        return sp.hermitian_project(np.where(grid.band_mask() & (K != 0), a, 0.0))
    conv_err = 0.0
    for t in (0.0, 1.7):
        fld = sp.SpectralField(grid, draw(), draw(), t, params, consts)
        co, ct = sp.nonlinear_term(fld)
        bo, bt = brute_convolution(fld)
        scale = max(np.abs(bo).max(), np.abs(bt).max())
        conv_err = max(conv_err, np.abs(co - bo).max() / scale, np.abs(ct - bt).max() / scale)

    # energy derivative against finite differences along the flow
    n = 1000
    k = 10 ** rng.uniform(-3, 1, n) * rng.choice([-1.0, 1.0], n)
    eta = rng.uniform(-50, 50, n)
    t = rng.uniform(0, 200, n)
    v = rng.standard_normal((n, 4))
    v /= np.linalg.norm(v, axis=1)[:, None]
    fd_err = 0.0
    for i in range(n):
        state = lm.ModeState(k[i], eta[i], t[i], v[i, 0] + 1j * v[i, 1], v[i, 2] + 1j * v[i, 3])
        an = lm.denergy_dt(state, consts, VISCOUS)
        fd_err = max(fd_err, abs(an - _fd_energy_rate(state, consts, VISCOUS)) / abs(an))

    # correction multiplier: closed form against the ODE
    m_err = 0.0
    for c, J, lam in ((0.01, 1.0, 0.171), (0.1, 2.0, 1e-4), (0.5, 1.5, 3.0)):
        ts = np.linspace(0.0, 100.0 / (c * lam), 201)
        sol = solve_ivp(lambda s, m: mp.m_correction_rhs(s, m, c, J, lam), (0.0, ts[-1]), [1.0],
                        t_eval=ts, rtol=1e-12, atol=1e-14, method="DOP853")
        closed = mp.eval_m_correction(ts, c, J, lam)
        m_err = max(m_err, np.max(np.abs(sol.y[0] - closed) / closed))

    # time derivative of the damping multiplier: complex-step derivative against -(1/2) k^2 / p
    kk = 10 ** rng.uniform(-3, 1, n) * rng.choice([-1.0, 1.0], n)
    ee = rng.uniform(-50, 50, n)
    tt = rng.uniform(0, 200, n)
    h = 1e-20
    cs_j = mp.eval_j_weight(kk, ee, tt + 1j * h).imag / h
    exact = mp.eval_j_weight_dt(kk, ee, tt)
    j_err = float(np.max(np.abs(cs_j - exact) / np.abs(exact)))

    elapsed = time.perf_counter() - t0
    ok = conv_err <= 1e-12 and fd_err <= 1e-6 and m_err <= 1e-8 and j_err <= 1e-6 and elapsed < 30
    report_line("AC8", ok, f"convolution {conv_err:.2g}, dE/dt {fd_err:.2g}, M {m_err:.2g}, "
                f"dJ/dt {j_err:.2g}, {elapsed:.1f}s")
    assert ok
