"""Per-frequency linear dynamics of the symmetrized variables.

At each frequency ``(k, eta)`` with ``k != 0`` the linearized symmetrized
system is a real 2x2 non-autonomous ODE for ``(Z, Q)``::

    dZ/dt = -(1/4)(p'/p) Z - sqrt(R)|k| p^{-1/2} Q - nu p Z
    dQ/dt = +(1/4)(p'/p) Q + sqrt(R)|k| p^{-1/2} Z - kappa p Q

The stiff diffusive part is removed with the exact integrating factor
``exp(-nu_min * int_0^t p ds)``, where ``nu_min = min(nu, kappa)``, leaving a
system whose coefficients are bounded by ``max(1, sqrt(R))``.

This module also evaluates the pointwise hypocoercive energy ``E_k``, its
dissipation ``D_k`` and the analytic derivative ``dE_k/dt``, and certifies
the Lyapunov inequality ``dE/dt + 8c D + 8c lam E <= 0`` over frequency grids.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import multipliers as mp
from .params import HypoConstants, PhysParams

DISSIPATION_NAMES = ("gamma", "tau", "alpha", "taualpha", "rho", "rhoalpha", "beta")


class StiffnessError(RuntimeError):
    """The adaptive integrator could not meet its tolerance."""


class CertificationError(ValueError):
    pass


@dataclass(frozen=True)
class ModeState:
    """Complex amplitudes ``(z, q)`` at frequency ``(k, eta)`` and time ``t``.

    Fields may be numpy arrays that broadcast against each other, which is how
    the vectorized routines below use it.
    """

    k: float
    eta: float
    t: float
    z: complex
    q: complex

    def __post_init__(self):
        mp._reject_zero_k(self.k)
        if not (np.all(np.isfinite(self.z)) and np.all(np.isfinite(self.q))):
            raise ValueError("non-finite mode state")


# ---------------------------------------------------------------- dynamics

def _coefficients(k, eta, t, richardson):
    p, dp = mp.eval_p(k, eta, t)
    shear = 0.25 * dp / p
    coupling = math.sqrt(richardson) * np.abs(k) / np.sqrt(p)
    return p, shear, coupling


def mode_rhs(state: ModeState, params: PhysParams):
    """Time derivatives ``(dz/dt, dq/dt)`` of the linear system."""
    p, shear, coupling = _coefficients(state.k, state.eta, state.t, params.richardson)
    dz = -shear * state.z - coupling * state.q - params.nu * p * state.z
    dq = shear * state.q + coupling * state.z - params.kappa * p * state.q
    return dz, dq


def p_integral(k, eta, t0, t1):
    """``int_{t0}^{t1} p ds`` in closed form (``k != 0``)."""
    k = np.asarray(k, dtype=float)
    d0, d1 = eta - k * t0, eta - k * t1
    return k * k * (t1 - t0) + (d0 ** 3 - d1 ** 3) / (3.0 * k)


def _scaled_rhs_factory(k, eta, params, n_points):
    """RHS of the integrating-factor system for a flat array of modes.

    The state vector is complex with layout ``[z_0..z_{n-1}, q_0..q_{n-1}]``.
    """
    nu0 = min(params.nu, params.kappa)
    dnu, dkappa = params.nu - nu0, params.kappa - nu0
    R = params.richardson

    def rhs(t, y):
        z, q = y[:n_points], y[n_points:]
        p, shear, coupling = _coefficients(k, eta, t, R)
        dz = -shear * z - coupling * q
        dq = shear * q + coupling * z
        if dnu:
            dz = dz - dnu * p * z
        if dkappa:
            dq = dq - dkappa * p * q
        return np.concatenate([dz, dq])

    return rhs, nu0


def propagate(k, eta, params, t0, t_eval, z0, q0, tol=1e-10, method=None):
    """Integrate many modes at once on a shared time grid.

    Parameters
    ----------
    k, eta : 1-D arrays of frequencies (``k != 0``).
    t_eval : increasing (or decreasing) sample times, ``t_eval[0]`` may equal ``t0``.
    z0, q0 : complex initial amplitudes, same shape as ``k``.

    Returns
    -------
    z, q : complex arrays of shape ``(len(t_eval), len(k))`` holding the
        *scaled* amplitudes ``exp(nu_min (I(t) - I(t0))) * (Z, Q)``.
    log_factor : array of the same shape, ``-nu_min (I(t) - I(t0))``; the
        physical amplitudes are ``exp(log_factor) * (z, q)``.
    """
    k = np.atleast_1d(np.asarray(k, dtype=float))
    eta = np.broadcast_to(np.asarray(eta, dtype=float), k.shape)
    mp._reject_zero_k(k)
    t_eval = np.asarray(t_eval, dtype=float)
    n = k.size
    rhs, nu0 = _scaled_rhs_factory(k, eta, params, n)
    if method is None:
        method = "DOP853" if params.nu == params.kappa else "Radau"
    y0 = np.concatenate([np.broadcast_to(z0, k.shape), np.broadcast_to(q0, k.shape)]).astype(complex)
    t_end = t_eval[-1]
    if t_end == t0:
        y = np.repeat(y0[None, :], t_eval.size, axis=0)
    else:
        # the coefficients are real, so real and imaginary parts evolve separately;
        # stacking them keeps the implicit solvers (real-only) usable
        m = 2 * n
        fun = lambda t, y: np.concatenate([rhs(t, y[:m]), rhs(t, y[m:])])
        yr0 = np.concatenate([y0.real, y0.imag])
        sol = solve_ivp(fun, (t0, t_end), yr0, method=method, t_eval=t_eval,
                        rtol=tol, atol=tol * 1e-3)
        if sol.status != 0:
            raise StiffnessError(f"integration failed at t={sol.t[-1] if sol.t.size else t0}: "
                                 f"{sol.message}")
        y = sol.y[:m].T + 1j * sol.y[m:].T
    log_factor = -nu0 * p_integral(k[None, :], eta[None, :], t0, t_eval[:, None])
    return y[:, :n], y[:, n:], log_factor


@dataclass(frozen=True)
class ModeTrajectory:
    """Samples of one mode at strictly monotone times."""

    k: float
    eta: float
    t: np.ndarray
    z: np.ndarray
    q: np.ndarray
    params: PhysParams
    tol: float
    log_scale: np.ndarray = field(repr=False)

    def state(self, i):
        return ModeState(self.k, self.eta, float(self.t[i]), complex(self.z[i]), complex(self.q[i]))

    def states(self):
        """All samples as one vectorized ModeState."""
        return ModeState(self.k, self.eta, self.t, self.z, self.q)

    def multipliers(self, mu=None, c=0.0, J=1.0):
        mu = self.params.mu if mu is None else mu
        return mp.bundle(self.k, self.eta, self.t, mu, self.params.nu, self.params.richardson, c, J)


def integrate_mode(init: ModeState, params: PhysParams, t_end, tol=1e-10, t_eval=None,
                   n_samples=2001, method=None) -> ModeTrajectory:
    """Solve the linear system from ``init`` to ``t_end``.

    ``t_end`` may lie before ``init.t`` (backward integration).  Returned
    amplitudes are physical.  Very strong viscous decay can underflow them to
    zero; ``ModeTrajectory.log_scale`` still carries the exponent then.

    Raises
    ------
    StiffnessError
        If the adaptive step collapses.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if t_end == init.t:
        raise ValueError("empty time span")
    if t_eval is None:
        t_eval = np.linspace(init.t, t_end, n_samples)
    t_eval = np.asarray(t_eval, dtype=float)
    z, q, logf = propagate(np.array([init.k]), np.array([init.eta]), params, init.t, t_eval,
                           np.array([init.z]), np.array([init.q]), tol=tol, method=method)
    scale = np.exp(logf[:, 0])
    return ModeTrajectory(init.k, init.eta, t_eval, z[:, 0] * scale, q[:, 0] * scale,
                          params, tol, log_scale=logf[:, 0])


# ---------------------------------------------------------------- energy

def _weights(k, eta, t, consts, params):
    mu = params.mu
    s = mp.shear_rate(k, eta, t)
    n_w = mp.eval_n_weight(k, eta, t, params.richardson)
    j_w = mp.eval_j_weight(k, eta, t)
    alpha, beta = mp.eval_alpha_beta(mu, k)
    d = eta - np.asarray(k, dtype=float) * t
    return s, n_w, j_w, alpha, beta, d


def energy_k(state: ModeState, consts: HypoConstants, params: PhysParams):
    """The pointwise hypocoercive energy ``E_k[Z, Q]``."""
    k, eta, t, z, q = state.k, state.eta, state.t, state.z, state.q
    s, n_w, j_w, alpha, beta, d = _weights(k, eta, t, consts, params)
    sr2 = 2.0 * math.sqrt(params.richardson)
    w = n_w + consts.c_tau * j_w
    S = np.abs(z) ** 2 + np.abs(q) ** 2
    X = np.real(z * np.conj(q))
    a1 = w * (1.0 + consts.c_alpha * alpha * d * d)
    b1 = consts.c_beta * beta * k * d
    return (a1 + b1) * S + (s / sr2) * (a1 - b1) * X


def dissipation_k(state: ModeState, consts: HypoConstants, params: PhysParams):
    """The seven unweighted dissipation components, keyed by name.

    The total dissipation is :func:`total_dissipation` of this dict.
    """
    k, eta, t = np.asarray(state.k, dtype=float), state.eta, state.t
    mp._reject_zero_k(k)
    mu = params.mu
    alpha, beta = mp.eval_alpha_beta(mu, k)
    p, _ = mp.eval_p(k, eta, t)
    d2 = (eta - k * t) ** 2
    S = np.abs(state.z) ** 2 + np.abs(state.q) ** 2
    k2, ak3 = k * k, np.abs(k) ** 3
    return {
        "gamma": mu * p * S,
        "tau": k2 / p * S,
        "alpha": alpha * mu * p * d2 * S,
        "taualpha": alpha * k2 * d2 / p * S,
        "rho": ak3 / p ** 1.5 * S,
        "rhoalpha": alpha * ak3 * d2 / p ** 1.5 * S,
        "beta": beta * k2 * S,
    }


def dissipation_weights(consts: HypoConstants, params: PhysParams):
    c_rho = 1.0 / math.sqrt(params.richardson)
    return {
        "gamma": 1.0,
        "tau": consts.c_tau,
        "alpha": consts.c_alpha,
        "taualpha": consts.c_tau * consts.c_alpha,
        "rho": c_rho,
        "rhoalpha": c_rho * consts.c_alpha,
        "beta": consts.c_beta,
    }


def total_dissipation(components, consts, params):
    w = dissipation_weights(consts, params)
    return sum(w[name] * components[name] for name in DISSIPATION_NAMES)


def denergy_dt(state: ModeState, consts: HypoConstants, params: PhysParams):
    """Analytic ``d/dt E_k`` along the linear flow through ``state``."""
    k = np.asarray(state.k, dtype=float)
    eta, t, z, q = state.eta, state.t, state.z, state.q
    R = params.richardson
    sr2 = 2.0 * math.sqrt(R)
    s, n_w, j_w, alpha, beta, d = _weights(k, eta, t, consts, params)
    ds = mp.shear_rate_dt(k, eta, t)
    dn = -n_w * mp.n_exponent_scale(R) * ds
    dj = mp.eval_j_weight_dt(k, eta, t)

    w = n_w + consts.c_tau * j_w
    dw = dn + consts.c_tau * dj
    ca_al = consts.c_alpha * alpha
    a1 = w * (1.0 + ca_al * d * d)
    da1 = dw * (1.0 + ca_al * d * d) - 2.0 * w * ca_al * d * k
    b1 = consts.c_beta * beta * k * d
    db1 = -consts.c_beta * beta * k * k

    dz, dq = mode_rhs(state, params)
    S = np.abs(z) ** 2 + np.abs(q) ** 2
    X = np.real(z * np.conj(q))
    dS = 2.0 * np.real(np.conj(z) * dz) + 2.0 * np.real(np.conj(q) * dq)
    dX = np.real(dz * np.conj(q) + z * np.conj(dq))
    return ((da1 + db1) * S + (a1 + b1) * dS
            + (ds * (a1 - b1) * X + s * (da1 - db1) * X + s * (a1 - b1) * dX) / sr2)


# ---------------------------------------------------------------- certification

def corner_states():
    r = 1.0 / math.sqrt(2.0)
    return np.array([[1.0, 0.0], [0.0, 1.0], [r, r], [r, 1j * r]], dtype=complex)


def sample_states(n_random=8, rng=None):
    """The four corner unit states followed by ``n_random`` random unit states."""
    rng = np.random.default_rng(rng)
    v = rng.standard_normal((n_random, 2)) + 1j * rng.standard_normal((n_random, 2))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return np.vstack([corner_states(), v])


@dataclass
class CertificationReport:
    """Outcome of :func:`certify_grid`.

    Per-point arrays have shape ``(len(eta_grid), len(k_grid))``.
    ``worst_margin`` is the largest margin
    ``(dE/dt + 8c D + 8c lam E) / (1 + |E|)`` over time and initial states,
    evaluated at the certified ``c`` with amplitudes normalized to
    ``|Z|^2 + |Q|^2 = 1``; it must not exceed ``slack``.
    """

    k_grid: np.ndarray
    eta_grid: np.ndarray
    t_span: tuple
    c_certified: float
    c_point: np.ndarray
    worst_margin: np.ndarray
    worst_margin_c0: np.ndarray
    integrated_ratio: np.ndarray
    c1_max: float
    c0_max: float
    min_coercivity: float
    n_states: int
    slack: float = 1e-10
    integrated_tol: float = 1e-6
    failures: list = field(default_factory=list)

    @property
    def margins_ok(self):
        return bool(np.all(self.worst_margin <= self.slack))

    @property
    def integrated_ok(self):
        return bool(np.all(self.integrated_ratio <= 1.0 + self.integrated_tol))

    @property
    def passed(self):
        return self.c_certified > 0 and self.margins_ok and self.integrated_ok and not self.failures

    def rows(self):
        for i, eta in enumerate(self.eta_grid):
            for j, k in enumerate(self.k_grid):
                yield {"k": k, "eta": eta, "c_certified": self.c_point[i, j],
                       "worst_margin": self.worst_margin[i, j]}

    def store(self, consts: HypoConstants) -> HypoConstants:
        """Copy of ``consts`` with ``c = c_certified`` and ``c0 = c1 = 8c``."""
        c = self.c_certified
        return consts.with_(c=c, c0=8.0 * c, c1=8.0 * c)


def _bisect_c(A, B, E, slack, lo=1e-6, hi=1.0, iters=40):
    """Largest c in [lo, hi] with ``A + 8 c B <= slack (1 + |E|)`` everywhere.

    Arrays have a leading axis of points; the condition is reduced over the
    rest.  Returns per-point c (0 where even ``lo`` fails).
    """
    thr = slack * (1.0 + np.abs(E))
    axes = tuple(range(1, A.ndim))

    def ok(c):
        c = c.reshape((-1,) + (1,) * (A.ndim - 1))
        return np.all(A + 8.0 * c * B <= thr, axis=axes)

    n = A.shape[0]
    lo_arr = np.full(n, lo)
    hi_arr = np.full(n, hi)
    good_hi = ok(hi_arr)
    good_lo = ok(lo_arr)
    for _ in range(iters):
        mid = np.sqrt(lo_arr * hi_arr)
        m_ok = ok(mid)
        lo_arr = np.where(m_ok, mid, lo_arr)
        hi_arr = np.where(m_ok, hi_arr, mid)
    out = np.where(good_hi, hi, lo_arr)
    return np.where(good_lo, out, 0.0)


def certify_grid(params: PhysParams, consts: HypoConstants, k_grid, eta_grid, t_span,
                 init_sampler=None, n_times=4001, tol=1e-10, slack=1e-10,
                 chunk=64, workers=1) -> CertificationReport:
    """Certify the Lyapunov inequality on a frequency grid.

    For every grid point and initial state (``init_sampler()`` returns an
    ``(n_states, 2)`` array of unit ``(z, q)`` pairs; default
    :func:`sample_states` with seed 0) the mode is integrated over
    ``t_span``; the largest ``c`` with all margins non-positive is then found
    by bisection, and the time-integrated estimate is checked at that ``c``.

    Points where no ``c >= 1e-6`` works are listed in ``failures``.  Chunks
    of ``chunk`` points are integrated on a pool of ``workers`` threads.
    """
    k_grid = np.asarray(k_grid, dtype=float)
    eta_grid = np.asarray(eta_grid, dtype=float)
    if k_grid.size == 0 or eta_grid.size == 0:
        raise CertificationError("empty frequency grid")
    if np.any(k_grid == 0):
        raise CertificationError("k = 0 is not certifiable")
    t0, t1 = map(float, t_span)
    if not t1 > t0:
        raise CertificationError("empty time span")
    states = sample_states(rng=0) if init_sampler is None else np.asarray(init_sampler())
    t_eval = np.linspace(t0, t1, n_times)

    K, H = np.meshgrid(k_grid, eta_grid)
    kf, hf = K.ravel(), H.ravel()
    n_pts = kf.size
    lam = mp.eval_lambda(params.mu, params.nu, kf) if not params.is_inviscid else np.zeros(n_pts)

    A_all = np.empty((n_pts, n_times, len(states)))
    B_all = np.empty_like(A_all)
    E_all = np.empty_like(A_all)

    def work(sl):
        kc, hc = kf[sl], hf[sl]
        # columns of the real fundamental matrix packed as real/imag parts
        zf, qf, logf = propagate(kc, hc, params, t0, t_eval,
                                 np.ones(kc.size, complex), 1j * np.ones(kc.size), tol=tol)
        phi = np.stack([np.stack([zf.real, zf.imag], -1), np.stack([qf.real, qf.imag], -1)], -2)
        # phi[t, point, row(z/q), col] ; states x = phi @ s
        zq = np.einsum("tprc,sc->tpsr", phi, states)
        z, q = zq[..., 0], zq[..., 1]
        tt = t_eval[:, None, None]
        kk, hh = kc[None, :, None], hc[None, :, None]
        st = ModeState(kk, hh, tt, z, q)
        S = np.abs(z) ** 2 + np.abs(q) ** 2
        A = denergy_dt(st, consts, params) / S
        comps = dissipation_k(st, consts, params)
        D = total_dissipation(comps, consts, params) / S
        E = energy_k(st, consts, params) / S
        lam_c = lam[sl][None, :, None]
        A_all[sl] = np.moveaxis(A, 0, 1)
        B_all[sl] = np.moveaxis(D + lam_c * E, 0, 1)
        E_all[sl] = np.moveaxis(E, 0, 1)
        return sl, E * S, comps, logf

    slices = [slice(s, min(s + chunk, n_pts)) for s in range(0, n_pts, chunk)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rat_parts = list(pool.map(work, slices))
    else:
        rat_parts = [work(sl) for sl in slices]

    c_point = _bisect_c(A_all, B_all, E_all, slack)
    failures = [(float(kf[i]), float(hf[i])) for i in np.flatnonzero(c_point <= 0)]
    c_cert = float(c_point.min()) if not failures else 0.0

    scale = 1.0 + np.abs(E_all)
    worst = np.max((A_all + 8.0 * c_cert * B_all) / scale, axis=(1, 2))
    worst_c0 = np.max(A_all / scale, axis=(1, 2))

    # diagnostic: largest c1 with c0 = 0 and largest c0 with c1 = 0
    D_only = B_all - lam[:, None, None] * E_all
    with np.errstate(divide="ignore", invalid="ignore"):
        c1_max = float(np.min(np.where(D_only > 0, -A_all / D_only, np.inf)))
        lamE = lam[:, None, None] * E_all
        c0_max = float(np.min(np.where(lamE > 0, -A_all / lamE, np.inf)))

    ratio = np.empty(n_pts)
    for sl, E_raw, comps, logf in rat_parts:
        ratio[sl] = _integrated_ratio(t_eval, lam[sl], logf, E_raw, comps, c_cert, consts, params)

    # coercivity: E / (S (1 + c_alpha alpha d^2)), minimum over samples
    alpha, _ = mp.eval_alpha_beta(params.mu, kf) if params.mu > 0 else (np.ones(n_pts), None)
    d2 = (hf[:, None] - kf[:, None] * t_eval[None, :]) ** 2
    coer = E_all / (1.0 + consts.c_alpha * alpha[:, None, None] * d2[:, :, None])

    return CertificationReport(
        k_grid=k_grid, eta_grid=eta_grid, t_span=(t0, t1), c_certified=c_cert,
        c_point=c_point.reshape(K.shape), worst_margin=worst.reshape(K.shape),
        worst_margin_c0=worst_c0.reshape(K.shape),
        integrated_ratio=ratio.reshape(K.shape), c1_max=c1_max, c0_max=c0_max,
        min_coercivity=float(coer.min()), n_states=len(states), slack=slack,
        failures=failures)


def _integrated_ratio(t, lam, logf, E, comps, c, consts, params):
    """max over t and states of the left side of the integrated estimate over E(0).

    Uses the scaled amplitudes; ``logf`` restores the viscous factor.
    """
    expo = 2.0 * c * lam[None, :, None] * t[:, None, None] + 2.0 * logf[:, :, None]
    w = np.exp(expo)
    integrand = w * (0.25 * consts.c_tau * comps["tau"]
                     + comps["rho"] / (2.0 * params.richardson))
    dt = np.diff(t)[:, None, None]
    cum = np.concatenate([np.zeros_like(integrand[:1]),
                          np.cumsum(0.5 * dt * (integrand[1:] + integrand[:-1]), axis=0)])
    lhs = w * E + cum
    return np.max(lhs / E[:1], axis=(0, 2))


def write_certification_csv(report: CertificationReport, path, rates=None):
    """CSV with columns ``k, eta, c_certified, worst_margin, fitted_rate, rate_over_lambda``.

    ``rates`` optionally maps ``k`` to a :class:`RateResult`; the rate columns
    are blank otherwise.
    """
    rates = rates or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "eta", "c_certified", "worst_margin", "fitted_rate", "rate_over_lambda"])
        for row in report.rows():
            r = rates.get(row["k"])
            w.writerow([repr(float(row["k"])), repr(float(row["eta"])),
                        repr(float(row["c_certified"])), repr(float(row["worst_margin"])),
                        "" if r is None else repr(r.rate), "" if r is None else repr(r.ratio)])


# ---------------------------------------------------------------- inviscid & rates

def inviscid_equivalence(traj: ModeTrajectory, richardson=None):
    """Extremal ratios of ``|p^{-1/4} Omega|^2 + |p^{1/4} Theta|^2`` to its initial value.

    Only meaningful for inviscid trajectories.
    """
    if not traj.params.is_inviscid:
        raise ValueError("inviscid_equivalence needs a trajectory with nu = kappa = 0")
    R = traj.params.richardson if richardson is None else richardson
    p, _ = mp.eval_p(traj.k, traj.eta, traj.t)
    bk = math.sqrt(1.0 + traj.k ** 2)
    # invert Z = <k>^{1/2} p^{-1/4} Omega and Q = sqrt(R) i sgn(k) <k>^{1/2} p^{1/4} Theta
    omega = traj.z * p ** 0.25 / math.sqrt(bk)
    theta = traj.q / (math.sqrt(R) * 1j * np.sign(traj.k) * math.sqrt(bk) * p ** 0.25)
    f = np.abs(p ** -0.25 * omega) ** 2 + np.abs(p ** 0.25 * theta) ** 2
    ratio = f / f[0]
    return float(ratio.min()), float(ratio.max())


@dataclass(frozen=True)
class RateResult:
    k: float
    rate: float
    stderr: float
    ratio: float
    t_window: tuple
    ok: bool
    reference: float


def natural_horizon(params: PhysParams, k, tau=1.0):
    """``tau / lam(max(|k|, mu))``: a horizon proportional to the predicted decay time."""
    kk = np.maximum(np.abs(np.asarray(k, dtype=float)), params.mu)
    return tau / mp.eval_lambda(params.mu, params.nu, kk)


def sweep_rates(params: PhysParams, k_list, eta0=0.0, t_end=None, consts=None,
                init=(1.0, 0.0), n_samples=801, tol=1e-10, tau=1.0):
    """Fit the exponential decay rate of ``E_k(t)`` on the tail ``[t_end/2, t_end]``.

    ``t_end`` may be a scalar or one value per ``k``; by default it is
    :func:`natural_horizon` with the given ``tau``.  The ratio reported is
    the fitted rate divided by ``lam(mu, k)``.
    """
    from .norms import fit_exponential, FitError  # local: norms imports this module

    if consts is None:
        from .params import default_constants
        consts = default_constants(params.richardson, params.epsilon)
    k_arr = np.atleast_1d(np.asarray(k_list, dtype=float))
    if t_end is None:
        t_end = natural_horizon(params, k_arr, tau)
    t_ends = np.broadcast_to(np.asarray(t_end, dtype=float), k_arr.shape)
    out = []
    for k, te in zip(k_arr.tolist(), t_ends.tolist()):
        lam = float(mp.eval_lambda(params.mu, params.nu, k))
        t = np.linspace(0.0, te, n_samples)
        z, q, logf = propagate(np.array([k]), np.array([eta0]), params, 0.0, t,
                               np.array([init[0]], complex), np.array([init[1]], complex), tol=tol)
        st = ModeState(k, eta0, t, z[:, 0], q[:, 0])
        # log E = log E_scaled + 2 log_factor, exact even when E underflows
        logE = np.log(energy_k(st, consts, params)) + 2.0 * logf[:, 0]
        try:
            fit = fit_exponential(t, logE, window=(te / 2.0, te), log_values=True)
            out.append(RateResult(k, fit.rate, fit.stderr, fit.rate / lam,
                                  fit.window, True, lam))
        except FitError:
            out.append(RateResult(k, math.nan, math.nan, math.nan, (te / 2.0, te), False, lam))
    return out
