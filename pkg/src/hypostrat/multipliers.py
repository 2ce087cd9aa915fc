"""Fourier multipliers and time-dependent weights of the energy method.

All functions broadcast over numpy arrays.  Frequencies are ``(k, eta)``,
conjugate to the moving-frame coordinates ``(X, Y)``; the shifted frequency
is ``eta - k t``.  Functions that divide by ``|k|`` raise on ``k = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ZeroFrequencyError(ValueError):
    """An operator that divides by |k| was evaluated on the k = 0 line."""


def _reject_zero_k(k):
    if np.any(np.asarray(k) == 0):
        raise ZeroFrequencyError("operator undefined at k = 0")


@dataclass(frozen=True)
class FrequencyPoint:
    k: float
    eta: float
    t: float = 0.0


def _point_args(k, eta, t):
    if isinstance(k, FrequencyPoint):
        return k.k, k.eta, k.t
    if eta is None or t is None:
        raise TypeError("pass either a FrequencyPoint or (k, eta, t)")
    return k, eta, t


def eval_p(k, eta=None, t=None):
    """Return ``(p, dp/dt)`` with ``p = k^2 + (eta - k t)^2``.

    Accepts ``(k, eta, t)`` arrays or a single :class:`FrequencyPoint`.
    """
    k, eta, t = _point_args(k, eta, t)
    k = np.asarray(k, dtype=float)
    d = eta - k * t
    return k * k + d * d, -2.0 * k * d


def shear_rate(k, eta, t):
    """The ratio ``dp/dt / (|k| p^{1/2})``, bounded by 2 in magnitude."""
    _reject_zero_k(k)
    p, dp = eval_p(k, eta, t)
    return dp / (np.abs(k) * np.sqrt(p))


def shear_rate_dt(k, eta, t):
    """Time derivative of :func:`shear_rate`, equal to ``2 |k|^3 / p^{3/2}``."""
    _reject_zero_k(k)
    p, _ = eval_p(k, eta, t)
    return 2.0 * np.abs(k) ** 3 / p ** 1.5


def eval_lambda(mu, nu, k):
    """Decay-rate multiplier: ``mu^{1/3}|k|^{2/3}`` for ``|k| >= mu``, ``k^2/nu`` below.

    Zero at ``k = 0``.
    """
    ak = np.abs(np.asarray(k, dtype=float))
    high = mu ** (1.0 / 3.0) * ak ** (2.0 / 3.0)
    if nu == 0.0:
        low = np.zeros_like(ak)
    else:
        low = ak * ak / nu
    return np.where(ak >= mu, high, low)


def eval_alpha_beta(mu, k):
    """The hypocoercive weights ``(alpha_k, beta_k)``.

    The tie ``|k| = mu`` goes to the high branch.  At ``k = 0`` the low branch
    applies (``alpha = 1``, ``beta = 1/mu``).  With ``mu = 0`` every ``k != 0``
    is on the high branch and both weights vanish.
    """
    ak = np.abs(np.asarray(k, dtype=float))
    low = ak < mu
    inv_mu = 1.0 / mu if mu > 0 else np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = np.where(low, 1.0, mu ** (2.0 / 3.0) * ak ** (-2.0 / 3.0))
        beta = np.where(low, inv_mu, mu ** (1.0 / 3.0) * ak ** (-4.0 / 3.0))
    return alpha, beta


def n_exponent_scale(richardson):
    return 1.0 / (2.0 * math.sqrt(richardson) - 1.0)


def eval_n_weight(k, eta, t=None, richardson=None):
    """``N_k = exp(-shear_rate / (2 sqrt(R) - 1))``.

    Bounded below by ``exp(-2/(2 sqrt R - 1))``.  It exceeds 1 whenever
    ``k (eta - k t) > 0``.  Called as ``eval_n_weight(point, R)`` with a
    :class:`FrequencyPoint` or as ``eval_n_weight(k, eta, t, R)``.
    """
    if isinstance(k, FrequencyPoint):
        richardson = eta
        k, eta, t = k.k, k.eta, k.t
    return np.exp(-shear_rate(k, eta, t) * n_exponent_scale(richardson))


def eval_n_weight_dt(k, eta, t, richardson):
    return -eval_n_weight(k, eta, t, richardson) * n_exponent_scale(richardson) \
        * shear_rate_dt(k, eta, t)


def eval_j_weight(k, eta=None, t=None):
    """Inviscid damping multiplier ``(1/2) arctan(eta/k - t)``, in ``[-pi/4, pi/4]``."""
    k, eta, t = _point_args(k, eta, t)
    _reject_zero_k(k)
    return 0.5 * np.arctan(eta / np.asarray(k, dtype=float) - t)


def eval_j_weight_dt(k, eta, t):
    """``-(1/2) k^2 / p``."""
    _reject_zero_k(k)
    p, _ = eval_p(k, eta, t)
    return -0.5 * np.asarray(k, dtype=float) ** 2 / p


def _f_integral(x):
    # int_0^x s^2 (1+s^2)^-2 ds
    return 0.5 * (np.arctan(x) - x / (1.0 + x * x))


def eval_m_correction(t, c, J, lam):
    """Closed-form solution of the correction ODE, ``M(t) = exp(J^2 F(c lam t))``.

    ``F(x) = (arctan x - x/(1+x^2))/2``.  ``M(0) = 1`` and ``M`` increases to
    ``exp(J^2 pi/4)``.
    """
    x = c * np.asarray(lam, dtype=float) * np.asarray(t, dtype=float)
    return np.exp(J * J * _f_integral(x))


def m_correction_rhs(t, m, c, J, lam):
    """Right-hand side of the correction ODE, used to check the closed form."""
    x = c * lam * t
    return c * J * J * lam * x * x / (1.0 + x * x) ** 2 * m


def decay_weight(t, c, lam, J):
    """The Japanese bracket ``<c lam t>^J``."""
    x = c * np.asarray(lam, dtype=float) * t
    return (1.0 + x * x) ** (0.5 * J)


def bracket(*xs):
    """``<x1, x2, ...> = (1 + x1^2 + x2^2 + ...)^{1/2}``."""
    s = 1.0
    for x in xs:
        s = s + np.asarray(x, dtype=float) ** 2
    return np.sqrt(s)


@dataclass(frozen=True)
class MultiplierBundle:
    """Every multiplier at one (or an array of) frequency points."""

    p: np.ndarray
    dp_dt: np.ndarray
    lam: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    n_weight: np.ndarray
    j_weight: np.ndarray
    m_corr: np.ndarray


def bundle(k, eta, t, mu, nu, richardson, c=0.0, J=1.0):
    p, dp = eval_p(k, eta, t)
    lam = eval_lambda(mu, nu, k)
    alpha, beta = eval_alpha_beta(mu, k)
    return MultiplierBundle(
        p=p, dp_dt=dp, lam=lam, alpha=alpha, beta=beta,
        n_weight=eval_n_weight(k, eta, t, richardson),
        j_weight=eval_j_weight(k, eta, t),
        m_corr=eval_m_correction(t, c, J, lam),
    )
