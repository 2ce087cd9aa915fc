"""Anisotropic Fourier-multiplier norms and decay-rate fits.

Fields are complex coefficient arrays on a moving-frame lattice, indexed
``[eta, k]`` with the frequency vectors supplied alongside.  Norms are Riemann
sums ``sum |m(k, eta) f|^2 dk deta`` of the squared multiplier, square-rooted.

A stationary-frame derivative ``d_y`` acts as ``i (eta - k t)`` on moving-frame
coefficients and ``d_y + t d_x`` acts as ``i eta``, so every norm below can be
evaluated directly on moving-frame data.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .multipliers import bracket, decay_weight, eval_lambda

FAMILIES = ("V", "W", "Htilde", "Htilde_alt")
MIN_FIT_SAMPLES = 8


class FitError(ValueError):
    """Too few samples, or non-positive values, in a fit window."""


@dataclass(frozen=True)
class NormSpec:
    """Which norm to evaluate, with its indices.

    ``family`` is one of ``V`` (weighted norm for stationary-frame fields),
    ``W`` (the variant with ``|d_x|^{1/2}`` weights plus a sup-in-``k``
    piece), ``Htilde`` (moving-frame norm for ``Z``/``Q``) and ``Htilde_alt``
    (``Htilde`` plus a sup-in-``k`` piece).  The ``(0)`` norms are the
    ``(t)`` norms evaluated at ``t = 0``.

    ``c`` and ``mu`` enter the time weight ``<c lam t>^J`` and the factor
    ``<k/mu>^{-j/3}``.  With ``mu = 0`` the ``j = 1`` terms vanish except on
    ``k = 0``.  ``sheared_bracket`` switches the Sobolev bracket of the
    moving-frame norms from ``<k, eta>`` to ``<k, eta - k t>``.
    """

    family: str
    n: float = 0.0
    m: float = 1.0
    J: float = 1.0
    j_range: tuple = (0, 1)
    c: float = 0.0
    mu: float = 0.0
    nu: float = 0.0
    sheared_bracket: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown norm family {self.family!r}")
        if self.n < 0 or self.m < 0 or self.J < 0:
            raise ValueError("norm indices must be nonnegative")
        if not set(self.j_range) <= {0, 1}:
            raise ValueError("j_range must be a subset of {0, 1}")

    def with_(self, **changes):
        return replace(self, **changes)


def _mu_factor(k, mu):
    """``<k/mu>^{-1/3}``, extended by continuity to ``mu = 0``."""
    if mu == 0.0:
        return np.where(k == 0, 1.0, 0.0)
    return bracket(k / mu) ** (-1.0 / 3.0)


def _time_weight(spec, k, t):
    if spec.c == 0.0 or spec.J == 0.0:
        return np.ones_like(k)
    lam = eval_lambda(spec.mu, spec.nu, k)
    return decay_weight(t, spec.c, lam, spec.J)


def _l2(a, dk, deta, axis=None):
    return np.sqrt(np.sum(np.abs(a) ** 2, axis=axis) * dk * deta)


def _sup_k(a, dk, deta):
    # max over lattice lines of the L^2 norm in eta
    return float(np.max(np.sqrt(np.sum(np.abs(a) ** 2, axis=0) * deta)))


def eval_norm(f_hat, k, eta, t, spec: NormSpec, dk=None, deta=None):
    """Evaluate the norm ``spec`` of the field with coefficients ``f_hat``.

    Parameters
    ----------
    f_hat : complex array ``(len(eta), len(k))``.
    k, eta : 1-D frequency vectors.  ``dk``/``deta`` default to the spacing
        of the sorted vectors.
    t : time at which the field is sampled.
    """
    k = np.asarray(k, dtype=float)
    eta = np.asarray(eta, dtype=float)
    f_hat = np.asarray(f_hat)
    if f_hat.shape != (eta.size, k.size):
        raise ValueError(f"field shape {f_hat.shape} does not match lattice {(eta.size, k.size)}")
    dk = _spacing(k) if dk is None else dk
    deta = _spacing(eta) if deta is None else deta
    K, H = np.meshgrid(k, eta)
    shifted = H - K * t

    if spec.family in ("V", "W"):
        sob = bracket(K, H) ** spec.n
        with np.errstate(divide="ignore"):
            inv_half = np.where((K == 0) & (H == 0), 0.0, np.hypot(K, H) ** -0.5)
        if spec.family == "V":
            xreg = bracket(K) ** (spec.m + 0.5)
        else:
            xreg = bracket(K) ** spec.m * np.sqrt(np.abs(K))
        base = sob * inv_half * xreg * _time_weight(spec, K, t)
        total = 0.0
        for j in spec.j_range:
            mult = base if j == 0 else base * _mu_factor(K, spec.mu) * np.abs(shifted)
            total += _l2(mult * f_hat, dk, deta)
        if spec.family == "W":
            total += _sup_k(sob * np.sqrt(np.abs(K)) * inv_half * f_hat, dk, deta)
        return float(total)

    sob = bracket(K, shifted if spec.sheared_bracket else H) ** spec.n
    base = _time_weight(spec, K, t) * sob * bracket(K) ** spec.m
    total = 0.0
    for j in spec.j_range:
        mult = base if j == 0 else base * _mu_factor(K, spec.mu) * np.abs(shifted)
        total += _l2(mult * f_hat, dk, deta)
    if spec.family == "Htilde_alt":
        total += _sup_k(sob * f_hat, dk, deta)
    return float(total)


def _spacing(v):
    if v.size < 2:
        return 1.0
    return float(np.min(np.diff(np.unique(v))))


# ---------------------------------------------------------------- physical quantities

def velocity_hat(omega_hat, k, eta, t):
    """Stationary-frame velocity ``u = grad^perp psi``, ``-Delta psi = omega``.

    Returned on the moving-frame lattice (``d_y -> i(eta - k t)``).
    """
    K, H = np.meshgrid(np.asarray(k, float), np.asarray(eta, float))
    sy = H - K * t
    p = K * K + sy * sy
    with np.errstate(divide="ignore", invalid="ignore"):
        psi = np.where(p > 0, -omega_hat / p, 0.0)
    return -1j * sy * psi, 1j * K * psi


def theorem_quantities(omega_hat, theta_hat, k, eta, t, spec: NormSpec, richardson):
    """The norms whose time dependence is compared with ``<t>^{+-1/2}`` and ``<t>^{-3/2}``.

    Returns a dict with keys ``dxu1`` (``||d_x u^1|| + sqrt(R)||d_x theta||``),
    ``u2`` (``||d_x |d_x, d_y + t d_x|^{-1} d_x u^2||``), ``growth``
    (``||omega|| + sqrt(R)||grad theta||``) and ``dxu2`` (``||d_x u^2||``, the
    integrand of the time-integrated term).  All are ``spec``-norms.
    """
    K, H = np.meshgrid(np.asarray(k, float), np.asarray(eta, float))
    sy = H - K * t
    u1, u2 = velocity_hat(omega_hat, k, eta, t)
    sr = math.sqrt(richardson)
    ev = lambda f: eval_norm(f, k, eta, t, spec)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_grad = np.where((K == 0) & (H == 0), 0.0, 1.0 / np.hypot(K, H))
    grad_theta = np.hypot(K, sy) * np.abs(theta_hat)
    return {
        "dxu1": ev(1j * K * u1) + sr * ev(1j * K * theta_hat),
        "u2": ev((1j * K) ** 2 * inv_grad * u2),
        "growth": ev(omega_hat) + sr * ev(grad_theta),
        "dxu2": ev(1j * K * u2),
    }


# ---------------------------------------------------------------- fits

@dataclass(frozen=True)
class RateFit:
    """Least-squares slope of ``log y`` against ``log t`` (power) or ``t`` (exponential).

    ``exponent`` is the power-law exponent; ``rate`` is the exponential decay
    rate (positive for decay).  The unused one is NaN.
    """

    kind: str
    exponent: float
    rate: float
    stderr: float
    intercept: float
    window: tuple
    n_points: int
    residual: float = 0.0


def _linfit(x, y):
    n = x.size
    A = np.vstack([x, np.ones(n)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    s2 = float(resid @ resid) / (n - 2)
    sxx = float(np.sum((x - x.mean()) ** 2))
    if sxx == 0:
        raise FitError("degenerate fit window")
    return float(coef[0]), float(coef[1]), math.sqrt(s2 / sxx), float(np.linalg.norm(resid))


def _window(t, y, window, log_values):
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    lo, hi = window if window is not None else (t.min(), t.max())
    sel = (t >= lo) & (t <= hi)
    if sel.sum() < MIN_FIT_SAMPLES:
        raise FitError(f"need at least {MIN_FIT_SAMPLES} samples in window {(lo, hi)}, got {int(sel.sum())}")
    ys = y[sel]
    if not log_values:
        if np.any(ys <= 0) or not np.all(np.isfinite(ys)):
            raise FitError("values must be positive and finite for a log fit")
        ys = np.log(ys)
    elif not np.all(np.isfinite(ys)):
        raise FitError("non-finite log values in window")
    return t[sel], ys, (float(lo), float(hi))


def fit_power(t, y, window=None, log_values=False) -> RateFit:
    """Fit ``y ~ A t^a`` by least squares on ``(log t, log y)``."""
    ts, ly, win = _window(t, y, window, log_values)
    if np.any(ts <= 0):
        raise FitError("power-law fit needs t > 0")
    a, b, se, res = _linfit(np.log(ts), ly)
    return RateFit("power", a, math.nan, se, b, win, ts.size, res)


def fit_exponential(t, y, window=None, log_values=False) -> RateFit:
    """Fit ``y ~ A exp(-r t)``; ``rate`` is ``r``."""
    ts, ly, win = _window(t, y, window, log_values)
    a, b, se, res = _linfit(ts, ly)
    return RateFit("exponential", math.nan, -a, se, b, win, ts.size, res)


def write_rate_csv(fits: dict, path):
    """CSV with columns ``quantity, window_start, window_end, exponent, stderr``.

    For exponential fits the ``exponent`` column holds the decay rate.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "window_start", "window_end", "exponent", "stderr"])
        for name, fit in fits.items():
            val = fit.exponent if fit.kind == "power" else fit.rate
            w.writerow([name, repr(fit.window[0]), repr(fit.window[1]), repr(val), repr(fit.stderr)])
