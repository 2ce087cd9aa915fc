"""Pseudo-spectral solver for the moving-frame Boussinesq system.

The unknowns are the moving-frame vorticity ``Omega`` and temperature
``Theta`` on a periodic frequency lattice ``k = dk * j``, ``eta = deta * l``
(FFT ordering), standing in for the whole plane::

    d_t Omega + U . grad_t Omega = -nu p Omega - R i k Theta
    d_t Theta + U . grad_t Theta = -kappa p Theta - i k p^{-1} Omega

with ``grad_t = (d_X, d_Y - t d_X)``, ``U = grad_t^perp Psi`` and
``-p Psi = Omega``.

Coefficients are samples of the continuous Fourier transform, so the
physical field is ``ifft2(F) / (dX dY)`` and lattice sums carry ``dk deta``.

Time stepping is a Strang splitting: nonlinear half steps (Heun) around a
linear step that propagates every mode with the symmetrized per-mode system
and the exact diffusive integrating factor.  When the nonlinearity vanishes,
as for single-wavevector data, the step reduces to the linear propagator.
"""
from __future__ import annotations

import io
import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import fft as sfft

from . import linear_mode as lm
from . import multipliers as mp
from .norms import NormSpec, eval_norm
from .params import HypoConstants, PhysParams

LEDGER_COLUMNS = ("t", "E", "D_gamma", "D_tau", "D_alpha", "D_taualpha", "D_beta",
                  "D_rho", "D_rhoalpha", "intD", "G")
SNAPSHOT_MAGIC = "hypostrat-snapshot-1"


class GridError(ValueError):
    """The lattice cannot represent the requested data."""


class ResolutionError(RuntimeError):
    """Too much energy has reached the edge of the dealiased band."""


class CFLError(RuntimeError):
    pass


class SolverBlowup(FloatingPointError):
    pass


class SnapshotError(ValueError):
    pass


# ---------------------------------------------------------------- lattice

@dataclass(frozen=True)
class Lattice:
    nk: int
    neta: int
    dk: float
    deta: float

    def __post_init__(self):
        if self.nk < 4 or self.neta < 4:
            raise GridError("lattice needs at least 4 points per direction")
        if not (self.dk > 0 and self.deta > 0):
            raise GridError("lattice spacings must be positive")

    @property
    def k(self):
        return self.dk * sfft.fftfreq(self.nk, 1.0 / self.nk)

    @property
    def eta(self):
        return self.deta * sfft.fftfreq(self.neta, 1.0 / self.neta)

    @property
    def shape(self):
        return (self.neta, self.nk)

    def mesh(self):
        return np.meshgrid(self.k, self.eta)

    @property
    def cell(self):
        """Physical cell area ``dX dY``."""
        return (2.0 * math.pi) ** 2 / (self.nk * self.dk * self.neta * self.deta)

    def band_mask(self):
        """True inside the 2/3 band, ``|j| < N/3`` in both directions."""
        jk = np.abs(sfft.fftfreq(self.nk, 1.0 / self.nk))
        jl = np.abs(sfft.fftfreq(self.neta, 1.0 / self.neta))
        return (jl[:, None] < self.neta / 3.0) & (jk[None, :] < self.nk / 3.0)

    def edge_mask(self, frac=0.8):
        jk = np.abs(sfft.fftfreq(self.nk, 1.0 / self.nk))
        jl = np.abs(sfft.fftfreq(self.neta, 1.0 / self.neta))
        return self.band_mask() & ((jl[:, None] >= frac * self.neta / 3.0)
                                   | (jk[None, :] >= frac * self.nk / 3.0))

    def as_dict(self):
        return {"nk": self.nk, "neta": self.neta, "dk": self.dk, "deta": self.deta}


def conj_flip(a):
    """The array ``b`` with ``b[-l, -j] = conj(a[l, j])`` in FFT ordering."""
    return np.conj(np.roll(a[::-1, ::-1], 1, axis=(0, 1)))


def hermitian_project(a):
    return 0.5 * (a + conj_flip(a))


def hermitian_defect(a):
    scale = np.max(np.abs(a))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(a - conj_flip(a))) / scale)


# ---------------------------------------------------------------- field

@dataclass
class SpectralField:
    """Moving-frame coefficients of ``Omega`` and ``Theta`` at time ``t``."""

    grid: Lattice
    omega_hat: np.ndarray
    theta_hat: np.ndarray
    t: float
    params: PhysParams
    consts: HypoConstants

    def __post_init__(self):
        for a in (self.omega_hat, self.theta_hat):
            if a.shape != self.grid.shape:
                raise GridError(f"coefficient shape {a.shape} != lattice {self.grid.shape}")

    def copy(self, **changes):
        out = replace(self, omega_hat=self.omega_hat.copy(), theta_hat=self.theta_hat.copy())
        return replace(out, **changes) if changes else out

    def psi_hat(self):
        K, H = self.grid.mesh()
        p, _ = mp.eval_p(K, H, self.t)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(p > 0, -self.omega_hat / p, 0.0)

    def velocity_hat(self):
        """Moving-frame velocity ``U = (-(d_Y - t d_X) Psi, d_X Psi)``."""
        K, H = self.grid.mesh()
        psi = self.psi_hat()
        return -1j * (H - K * self.t) * psi, 1j * K * psi

    def physical(self, a_hat):
        return to_physical(a_hat, self.grid)


def to_physical(a_hat, grid: Lattice, workers=None):
    return sfft.ifft2(a_hat, workers=workers).real / grid.cell


def to_spectral(a, grid: Lattice, workers=None):
    return sfft.fft2(a, workers=workers) * grid.cell


@dataclass(frozen=True)
class FieldConfig:
    """Initial-data recipe.

    ``recipe`` is one of ``zero``, ``single`` (one wavevector ``(k0, eta0)``
    plus its conjugate), ``gaussian`` (bump centred at ``(+-k0, +-eta0)``
    with widths ``width_k``, ``width_eta``) and ``random`` (band-limited
    random phases inside ``|k| <= k_max``, ``|eta| <= eta_max``).
    ``theta_ratio`` sets ``Theta = theta_ratio * Omega`` before rescaling.
    The initial size ``||omega||_V(0) + sqrt(R)||grad theta||_V(0)`` is
    rescaled to ``zeta`` unless ``zeta`` is None.
    """

    nk: int = 64
    neta: int = 64
    dk: float = 0.25
    deta: float = 0.25
    recipe: str = "gaussian"
    zeta: float | None = None
    k0: float = 0.5
    eta0: float = 0.0
    width_k: float = 0.25
    width_eta: float = 1.0
    k_max: float = 1.0
    eta_max: float = 4.0
    theta_ratio: complex = 1.0
    amplitude: complex = 1.0
    seed: int = 0
    n: float = 0.0
    m: float = 1.0
    taylor: bool = False


def initial_norm_spec(cfg: FieldConfig, params: PhysParams) -> NormSpec:
    return NormSpec("V", n=cfg.n, m=cfg.m, J=0.0, mu=params.mu, nu=params.nu)


def data_size(omega_hat, theta_hat, grid: Lattice, t, spec: NormSpec, richardson):
    """``||omega||_spec + sqrt(R) ||grad theta||_spec`` of moving-frame data."""
    K, H = grid.mesh()
    gth = np.hypot(K, H - K * t) * np.abs(theta_hat)
    k, eta = grid.k, grid.eta
    return (eval_norm(omega_hat, k, eta, t, spec, grid.dk, grid.deta)
            + math.sqrt(richardson) * eval_norm(gth, k, eta, t, spec, grid.dk, grid.deta))


def init_field(cfg: FieldConfig, params: PhysParams, consts: HypoConstants) -> SpectralField:
    grid = Lattice(cfg.nk, cfg.neta, cfg.dk, cfg.deta)
    if cfg.taylor and params.mu > 0 and grid.dk > params.mu:
        raise GridError(f"dk = {grid.dk} exceeds mu = {params.mu}: no lattice line in the "
                        "low-frequency (Taylor) regime")
    K, H = grid.mesh()
    band = grid.band_mask()
    omega = np.zeros(grid.shape, complex)

    if cfg.recipe == "zero":
        pass
    elif cfg.recipe == "single":
        j = cfg.k0 / grid.dk
        l = cfg.eta0 / grid.deta
        if abs(j - round(j)) > 1e-9 or abs(l - round(l)) > 1e-9:
            raise GridError("single wavevector is not on the lattice")
        j, l = int(round(j)), int(round(l))
        if j == 0:
            raise GridError("single-wavevector recipe needs k0 != 0")
        if not band[l % grid.neta, j % grid.nk]:
            raise GridError("single wavevector lies outside the dealiased band")
        omega[l % grid.neta, j % grid.nk] = cfg.amplitude
        omega[-l % grid.neta, -j % grid.nk] = np.conj(cfg.amplitude)
    elif cfg.recipe == "gaussian":
        g = lambda s: np.exp(-((K - s * cfg.k0) / cfg.width_k) ** 2
                             - ((H - s * cfg.eta0) / cfg.width_eta) ** 2)
        omega = cfg.amplitude * g(1.0) + np.conj(cfg.amplitude) * g(-1.0)
        omega = omega.astype(complex)
    elif cfg.recipe == "random":
        rng = np.random.default_rng(cfg.seed)
        sel = (np.abs(K) <= cfg.k_max) & (np.abs(H) <= cfg.eta_max)
        omega = np.where(sel, rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape), 0)
        omega = cfg.amplitude * omega
    else:
        raise ValueError(f"unknown initial-data recipe {cfg.recipe!r}")

    omega = np.where(K == 0, 0.0, omega)
    omega = hermitian_project(omega)
    if np.any(np.abs(omega[~band]) > 1e-12 * max(np.max(np.abs(omega)), 1e-300)):
        raise GridError("initial data is not contained in the dealiased band")
    omega = np.where(band, omega, 0.0)
    theta = _phase_shift(omega, K, cfg.theta_ratio)

    if cfg.zeta is not None and cfg.recipe != "zero":
        size = data_size(omega, theta, grid, 0.0, initial_norm_spec(cfg, params), params.richardson)
        if size == 0:
            raise GridError("initial data has zero size")
        s = cfg.zeta / size
        omega, theta = omega * s, theta * s
    return SpectralField(grid, omega, theta, 0.0, params, consts)


def _phase_shift(omega, K, ratio):
    # a complex ratio applied on k > 0 and conjugated on k < 0 keeps Theta real
    r = np.where(K > 0, ratio, np.conj(ratio))
    return hermitian_project(r * omega)


# ---------------------------------------------------------------- nonlinearity

def nonlinear_term(fld: SpectralField, workers=None, return_velocity=False):
    """Dealiased coefficients of ``U . grad_t Omega`` and ``U . grad_t Theta``."""
    grid = fld.grid
    K, H = grid.mesh()
    sy = H - K * fld.t
    u1h, u2h = fld.velocity_hat()
    stack = np.stack([u1h, u2h,
                      1j * K * fld.omega_hat, 1j * sy * fld.omega_hat,
                      1j * K * fld.theta_hat, 1j * sy * fld.theta_hat])
    phys = sfft.ifft2(stack, axes=(-2, -1), workers=workers).real / grid.cell
    u1, u2 = phys[0], phys[1]
    prod = np.stack([u1 * phys[2] + u2 * phys[3], u1 * phys[4] + u2 * phys[5]])
    out = sfft.fft2(prod, axes=(-2, -1), workers=workers) * grid.cell
    band = grid.band_mask()
    conv_o = np.where(band, out[0], 0.0)
    conv_t = np.where(band, out[1], 0.0)
    if return_velocity:
        return conv_o, conv_t, (u1, u2)
    return conv_o, conv_t


def cfl_number(fld: SpectralField, dt, velocity=None):
    """Advective CFL number of the moving-frame transport ``(U1 - t U2, U2)``."""
    if velocity is None:
        g = fld.grid
        u1h, u2h = fld.velocity_hat()
        velocity = (to_physical(u1h, g), to_physical(u2h, g))
    u1, u2 = velocity
    g = fld.grid
    dX = 2.0 * math.pi / (g.nk * g.dk)
    dY = 2.0 * math.pi / (g.neta * g.deta)
    return dt * (np.max(np.abs(u1 - fld.t * u2)) / dX + np.max(np.abs(u2)) / dY)


# ---------------------------------------------------------------- symmetrization

def symmetrize_arrays(omega_hat, theta_hat, k, eta, t, richardson, alt=False):
    """``(Z, Q)`` from ``(Omega, Theta)`` at frequencies broadcast from ``k``, ``eta``.

    Main form ``Z = <k>^{1/2} p^{-1/4} Omega``,
    ``Q = sqrt(R) i sgn(k) <k>^{1/2} p^{1/4} Theta``; with ``alt`` the
    ``<k>^{1/2}`` factors become ``|k|^{1/2}`` and ``|k|^{-1/2}``.
    """
    wz, wq = _sym_weights(k, eta, t, richardson, alt)
    return wz * omega_hat, wq * theta_hat


def unsymmetrize_arrays(z, q, k, eta, t, richardson, alt=False):
    wz, wq = _sym_weights(k, eta, t, richardson, alt)
    return z / wz, q / wq


def _sym_weights(k, eta, t, richardson, alt):
    k = np.asarray(k, dtype=float)
    mp._reject_zero_k(k)
    p, _ = mp.eval_p(k, eta, t)
    ak = np.abs(k)
    sr = math.sqrt(richardson)
    if alt:
        wz = np.sqrt(ak) * p ** -0.25
        wq = sr * 1j * np.sign(k) * p ** 0.25 / np.sqrt(ak)
    else:
        bk = np.sqrt(mp.bracket(k))
        wz = bk * p ** -0.25
        wq = sr * 1j * np.sign(k) * bk * p ** 0.25
    return wz, wq


def symmetrize(fld: SpectralField, alt=False):
    """Symmetrized arrays on the full lattice; the ``k = 0`` column is set to zero."""
    K, H = fld.grid.mesh()
    nz = K[0] != 0
    Z = np.zeros(fld.grid.shape, complex)
    Q = np.zeros(fld.grid.shape, complex)
    Z[:, nz], Q[:, nz] = symmetrize_arrays(fld.omega_hat[:, nz], fld.theta_hat[:, nz],
                                           K[:, nz], H[:, nz], fld.t, fld.params.richardson, alt)
    return Z, Q


# ---------------------------------------------------------------- stepping

def _linear_propagate(fld: SpectralField, dt, h_max):
    """Advance the linear part of every mode from ``t`` to ``t + dt``."""
    params, grid = fld.params, fld.grid
    t0, t1 = fld.t, fld.t + dt
    K, H = grid.mesh()
    nz = K[0] != 0
    omega = fld.omega_hat.copy()
    theta = fld.theta_hat.copy()

    # k = 0 column: pure diffusion
    e0 = H[:, ~nz] ** 2 * dt
    omega[:, ~nz] *= np.exp(-params.nu * e0)
    theta[:, ~nz] *= np.exp(-params.kappa * e0)

    k, eta = K[:, nz], H[:, nz]
    z, q = symmetrize_arrays(omega[:, nz], theta[:, nz], k, eta, t0, params.richardson)
    nsub = max(1, int(math.ceil(abs(dt) / h_max - 1e-12)))
    h = dt / nsub
    nu0 = min(params.nu, params.kappa)
    dnu, dkap = params.nu - nu0, params.kappa - nu0
    sr = math.sqrt(params.richardson)
    ak = np.abs(k)

    def rhs(t, z, q):
        p, dp = mp.eval_p(k, eta, t)
        a = 0.25 * dp / p
        b = sr * ak / np.sqrt(p)
        return -a * z - b * q, a * q + b * z

    def residual(z, q, ta, tb):
        if dnu == 0 and dkap == 0:
            return z, q
        I = lm.p_integral(k, eta, ta, tb)
        return z * np.exp(-dnu * I), q * np.exp(-dkap * I)

    t = t0
    for _ in range(nsub):
        z, q = residual(z, q, t, t + 0.5 * h)
        k1 = rhs(t, z, q)
        k2 = rhs(t + 0.5 * h, z + 0.5 * h * k1[0], q + 0.5 * h * k1[1])
        k3 = rhs(t + 0.5 * h, z + 0.5 * h * k2[0], q + 0.5 * h * k2[1])
        k4 = rhs(t + h, z + h * k3[0], q + h * k3[1])
        z = z + (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        q = q + (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        z, q = residual(z, q, t + 0.5 * h, t + h)
        t = t + h
    damp = np.exp(-nu0 * lm.p_integral(k, eta, t0, t1))
    z, q = z * damp, q * damp
    omega[:, nz], theta[:, nz] = unsymmetrize_arrays(z, q, k, eta, t1, params.richardson)
    return omega, theta


def _nonlinear_half(fld: SpectralField, tau, workers, cfl_max):
    """Heun step of ``d_t (Omega, Theta) = -(U . grad_t)(Omega, Theta)`` at frozen time."""
    n1o, n1t, vel = nonlinear_term(fld, workers, return_velocity=True)
    if cfl_max is not None:
        cfl = cfl_number(fld, tau, vel)
        if cfl > cfl_max:
            raise CFLError(f"CFL number {cfl:.3g} exceeds {cfl_max} at t={fld.t}")
    mid = fld.copy(omega_hat=fld.omega_hat - tau * n1o, theta_hat=fld.theta_hat - tau * n1t)
    n2o, n2t = nonlinear_term(mid, workers)
    return (fld.omega_hat - 0.5 * tau * (n1o + n2o),
            fld.theta_hat - 0.5 * tau * (n1t + n2t))


def step(fld: SpectralField, dt, nonlinear=True, h_lin=0.02, workers=None,
         cfl_max=1.0) -> SpectralField:
    """One step ``t -> t + dt``.

    Strang splitting ``N(dt/2) L(dt) N(dt/2)``: the nonlinear sub-flows use
    Heun's method at frozen times ``t`` and ``t + dt``; the linear sub-flow
    uses RK4 substeps of size at most ``h_lin`` on the integrating-factor
    form of the symmetrized system.

    Raises
    ------
    CFLError
        If the nonlinear advection violates ``cfl_max``.
    SolverBlowup
        If a non-finite coefficient appears; the message names the mode.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    out = fld
    if nonlinear:
        o, th = _nonlinear_half(out, 0.5 * dt, workers, cfl_max)
        out = out.copy(omega_hat=o, theta_hat=th)
    o, th = _linear_propagate(out, dt, h_lin)
    out = out.copy(omega_hat=o, theta_hat=th, t=fld.t + dt)
    if nonlinear:
        o, th = _nonlinear_half(out, 0.5 * dt, workers, cfl_max)
        out = out.copy(omega_hat=o, theta_hat=th)
    band = out.grid.band_mask()
    out.omega_hat = hermitian_project(np.where(band, out.omega_hat, 0.0))
    out.theta_hat = hermitian_project(np.where(band, out.theta_hat, 0.0))
    for name, a in (("omega", out.omega_hat), ("theta", out.theta_hat)):
        bad = ~np.isfinite(a)
        if bad.any():
            l, j = np.argwhere(bad)[0]
            raise SolverBlowup(f"non-finite {name} coefficient at (k={out.grid.k[j]}, "
                               f"eta={out.grid.eta[l]}), t={out.t}")
    return out


def edge_fraction(fld: SpectralField, frac=0.8):
    """Share of ``sum |Omega|^2 + |Theta|^2`` in the outer part of the 2/3 band."""
    e = np.abs(fld.omega_hat) ** 2 + np.abs(fld.theta_hat) ** 2
    tot = e.sum()
    return 0.0 if tot == 0 else float(e[fld.grid.edge_mask(frac)].sum() / tot)


def check_resolution(fld: SpectralField, max_fraction):
    f = edge_fraction(fld)
    if f > max_fraction:
        raise ResolutionError(f"band-edge energy fraction {f:.3g} > {max_fraction} at t={fld.t}")
    return f


# ---------------------------------------------------------------- ledger

def energy_weights(fld: SpectralField, consts: HypoConstants):
    """``<c lam t>^{2J} / M_k * <k, eta>^{2n} <k>^{2m}`` on the nonzero-k columns."""
    K, H = fld.grid.mesh()
    nz = K[0] != 0
    k, eta = K[:, nz], H[:, nz]
    p = fld.params
    lam = mp.eval_lambda(p.mu, p.nu, k)
    w = mp.decay_weight(fld.t, consts.c, lam, 2.0 * consts.J) \
        / mp.eval_m_correction(fld.t, consts.c, consts.J, lam)
    w = w * mp.bracket(k, eta) ** (2.0 * consts.n) * mp.bracket(k) ** (2.0 * consts.m)
    return nz, k, eta, lam, w


def ledger_update(fld: SpectralField, consts: HypoConstants | None = None) -> dict:
    """Energy and weighted dissipation components at the field's time.

    Keys are ``t``, ``E`` and ``D_<name>`` (each including its coefficient
    ``c_*``); the running integral and ``G`` are filled by
    :meth:`EnergyLedger.append`.
    """
    consts = fld.consts if consts is None else consts
    nz, k, eta, lam, w = energy_weights(fld, consts)
    Z, Q = symmetrize(fld)
    st = lm.ModeState(k, eta, fld.t, Z[:, nz], Q[:, nz])
    cell = fld.grid.dk * fld.grid.deta
    row = {"t": float(fld.t), "E": float(np.sum(w * lm.energy_k(st, consts, fld.params)) * cell)}
    comps = lm.dissipation_k(st, consts, fld.params)
    cw = lm.dissipation_weights(consts, fld.params)
    for name in lm.DISSIPATION_NAMES:
        row["D_" + name] = float(np.sum(w * cw[name] * comps[name]) * cell)
    return row


@dataclass
class EnergyLedger:
    """Time series of ledger rows with the running dissipation integral."""

    c: float
    zeta: float = 0.0
    rows: list = field(default_factory=list)

    def append(self, row: dict):
        D = sum(row["D_" + n] for n in lm.DISSIPATION_NAMES)
        row = dict(row)
        if self.rows:
            prev = self.rows[-1]
            if not row["t"] > prev["t"]:
                raise ValueError("ledger times must be strictly increasing")
            row["intD"] = prev["intD"] + 0.5 * (row["t"] - prev["t"]) * (D + prev["D"])
        else:
            row["intD"] = 0.0
        row["D"] = D
        row["G"] = row["E"] + self.c * row["intD"]
        self.rows.append(row)
        return row

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(",".join(LEDGER_COLUMNS) + "\n")
            for r in self.rows:
                fh.write(",".join(repr(float(r[c])) for c in LEDGER_COLUMNS) + "\n")

    @classmethod
    def read_csv(cls, path, c, zeta=0.0):
        led = cls(c=c, zeta=zeta)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        for vals in data:
            r = dict(zip(LEDGER_COLUMNS, map(float, vals)))
            r["D"] = sum(r["D_" + n] for n in lm.DISSIPATION_NAMES)
            led.rows.append(r)
        return led


@dataclass(frozen=True)
class MonitorResult:
    passed: bool
    first_violation: float | None
    max_excess: float
    c: float


def bootstrap_monitor(ledger: EnergyLedger, c=None, slack=1e-3) -> MonitorResult:
    """Check that ``G = E + c int D`` never exceeds its running minimum by more than ``slack``.

    The excess is measured relative to the running minimum of ``G``.
    """
    c = ledger.c if c is None else c
    if not ledger.rows:
        return MonitorResult(True, None, 0.0, c)
    G = ledger.column("E") + c * ledger.column("intD")
    t = ledger.column("t")
    run_min = np.minimum.accumulate(G)
    with np.errstate(divide="ignore", invalid="ignore"):
        excess = np.where(run_min > 0, (G - run_min) / run_min, np.where(G > run_min, np.inf, 0.0))
    bad = np.flatnonzero(excess > slack)
    first = float(t[bad[0]]) if bad.size else None
    return MonitorResult(bad.size == 0, first, float(excess.max()), c)


def largest_monotone_c(ledger: EnergyLedger, slack=1e-3, hi=1.0, iters=50):
    """Largest ``c`` in ``[0, hi]`` for which :func:`bootstrap_monitor` passes."""
    if not bootstrap_monitor(ledger, 0.0, slack).passed:
        return 0.0
    if bootstrap_monitor(ledger, hi, slack).passed:
        return hi
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if bootstrap_monitor(ledger, mid, slack).passed:
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------- snapshots

def _header(fld: SpectralField, payload: bytes, extra=None):
    h = {
        "format": SNAPSHOT_MAGIC,
        "grid": fld.grid.as_dict(),
        "t": fld.t,
        "params": {k: v for k, v in fld.params.as_dict().items() if k != "mu"},
        "consts": fld.consts.as_dict(),
        "layout": "omega then theta; each row-major over eta then k in FFT order; "
                  "little-endian float64 (re, im) pairs",
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    if extra:
        h["extra"] = extra
    return h


def snapshot_bytes(fld: SpectralField, extra=None) -> bytes:
    buf = io.BytesIO()
    for a in (fld.omega_hat, fld.theta_hat):
        buf.write(np.ascontiguousarray(a, dtype="<c16").tobytes())
    payload = buf.getvalue()
    head = json.dumps(_header(fld, payload, extra), sort_keys=True).encode() + b"\n"
    return head + payload


def save_snapshot(fld: SpectralField, path, extra=None):
    data = snapshot_bytes(fld, extra)
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def load_snapshot(path):
    """Return ``(field, header)``.

    Raises
    ------
    SnapshotError
        On a malformed header or payload checksum mismatch.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    nl = data.find(b"\n")
    if nl < 0:
        raise SnapshotError("missing header")
    try:
        head = json.loads(data[:nl])
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"bad header: {exc}") from None
    if head.get("format") != SNAPSHOT_MAGIC:
        raise SnapshotError("not a snapshot file")
    payload = data[nl + 1:]
    if hashlib.sha256(payload).hexdigest() != head["payload_sha256"]:
        raise SnapshotError("payload checksum mismatch")
    grid = Lattice(**head["grid"])
    n = grid.nk * grid.neta
    arr = np.frombuffer(payload, dtype="<c16")
    if arr.size != 2 * n:
        raise SnapshotError("payload size does not match grid")
    omega = arr[:n].reshape(grid.shape).astype(complex)
    theta = arr[n:].reshape(grid.shape).astype(complex)
    params = PhysParams(**head["params"])
    consts = HypoConstants(**head["consts"])
    return SpectralField(grid, omega, theta, float(head["t"]), params, consts), head


def linear_evolution(fld: SpectralField, times, tol=1e-10, threshold=1e-14):
    """Exact linear evolution of every lattice mode, sampled at ``times``.

    Modes whose initial amplitude is below ``threshold`` times the maximum
    are left at zero.  Yields one :class:`SpectralField` per time.
    """
    times = np.asarray(times, dtype=float)
    if times[0] < fld.t:
        raise ValueError("times must not precede the field time")
    params = fld.params
    K, H = fld.grid.mesh()
    Z, Q = symmetrize(fld)
    amp = np.abs(Z) + np.abs(Q)
    live = (K != 0) & (amp > threshold * max(amp.max(), 1e-300))
    idx = np.nonzero(live)
    k, eta = K[idx], H[idx]
    z, q, logf = lm.propagate(k, eta, params, fld.t, times, Z[idx], Q[idx], tol=tol)
    scale = np.exp(logf)
    nz = K[0] != 0
    for i, t in enumerate(times):
        o = np.zeros(fld.grid.shape, complex)
        th = np.zeros(fld.grid.shape, complex)
        zz, qq = unsymmetrize_arrays(z[i] * scale[i], q[i] * scale[i], k, eta, t,
                                     params.richardson)
        o[idx], th[idx] = zz, qq
        e0 = np.exp(-H[:, ~nz] ** 2 * (t - fld.t))
        o[:, ~nz] = fld.omega_hat[:, ~nz] * e0 ** params.nu
        th[:, ~nz] = fld.theta_hat[:, ~nz] * e0 ** params.kappa
        yield fld.copy(omega_hat=o, theta_hat=th, t=float(t))
