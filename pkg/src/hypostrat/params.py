"""Physical parameters and hypocoercive constants.

Everything here is a cheap pure function of a few scalars.  The decay
constants ``c``, ``c0`` and ``c1`` have no closed form; they start at zero and
are filled in by :func:`hypostrat.linear_mode.certify_grid`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace


class DomainError(ValueError):
    """A parameter lies outside the range where the theory applies."""


class AdmissibilityError(ValueError):
    """Viscosity and diffusivity are too far apart for the given Richardson number."""


def _check_phys(nu, kappa, richardson, epsilon):
    if not 0.0 < nu < 1.0:
        raise DomainError(f"nu must lie in (0, 1), got {nu!r}")
    if not 0.0 < kappa < 1.0:
        raise DomainError(f"kappa must lie in (0, 1), got {kappa!r}")
    _check_r_eps(richardson, epsilon)


def _check_r_eps(richardson, epsilon):
    if not richardson > 0.25:
        raise DomainError(f"Richardson number must exceed 1/4, got {richardson!r}")
    if not 0.0 < epsilon < 0.5:
        raise DomainError(f"epsilon must lie in (0, 1/2), got {epsilon!r}")


@dataclass(frozen=True)
class PhysParams:
    """Dimensionless viscosity, thermal diffusivity, Richardson number and margin.

    ``mu`` is derived on construction.  When the diffusion condition fails it
    is still computed (and may be negative); use :func:`validate_diffusion`
    before relying on it.

    Inviscid runs (``nu = kappa = 0``) are built with :meth:`inviscid`, which
    skips the ``(0, 1)`` range check and sets ``mu = 0``.
    """

    nu: float
    kappa: float
    richardson: float
    epsilon: float = 0.1
    mu: float = field(init=False)

    def __post_init__(self):
        if self.nu == 0.0 and self.kappa == 0.0:
            _check_r_eps(self.richardson, self.epsilon)
            object.__setattr__(self, "mu", 0.0)
            return
        _check_phys(self.nu, self.kappa, self.richardson, self.epsilon)
        object.__setattr__(self, "mu", _mu_formula(self.nu, self.kappa, self.richardson))

    @classmethod
    def inviscid(cls, richardson, epsilon=0.1):
        return cls(0.0, 0.0, richardson, epsilon)

    @property
    def is_inviscid(self):
        return self.nu == 0.0 and self.kappa == 0.0

    @property
    def sqrt_r(self):
        return math.sqrt(self.richardson)

    def with_(self, **changes):
        return replace(self, **changes)

    def as_dict(self):
        return {"nu": self.nu, "kappa": self.kappa, "richardson": self.richardson,
                "epsilon": self.epsilon, "mu": self.mu}


def _mu_formula(nu, kappa, richardson):
    lo, hi = min(nu, kappa), max(nu, kappa)
    w = 1.0 / (4.0 * math.sqrt(richardson))
    return lo * (1.0 - w - w * hi / lo)


def validate_diffusion(params: PhysParams) -> bool:
    """Return True iff ``max(nu, kappa) / min(nu, kappa) <= 4 sqrt(R) - 1 - eps``.

    The boundary case counts as admissible.
    """
    _check_phys(params.nu, params.kappa, params.richardson, params.epsilon)
    ratio = max(params.nu, params.kappa) / min(params.nu, params.kappa)
    return ratio <= 4.0 * math.sqrt(params.richardson) - 1.0 - params.epsilon


def compute_mu(params: PhysParams) -> float:
    """The effective dissipation scale ``mu``.

    Raises
    ------
    AdmissibilityError
        If the diffusion condition fails or ``mu`` is not strictly positive.
    """
    if not validate_diffusion(params):
        raise AdmissibilityError(
            f"nu/kappa ratio too large for R={params.richardson}, eps={params.epsilon}")
    mu = _mu_formula(params.nu, params.kappa, params.richardson)
    if mu <= 0.0:
        raise AdmissibilityError(f"mu = {mu} is not positive")
    return mu


@dataclass(frozen=True)
class HypoConstants:
    """Lyapunov weights, decay constants and norm indices.

    ``c`` is the decay constant of the energy method, ``c0``/``c1`` the
    constants of the pointwise Lyapunov inequality.  All three are zero until
    certified.
    """

    c_tau: float
    c_alpha: float
    c_beta: float
    c: float = 0.0
    c0: float = 0.0
    c1: float = 0.0
    n: float = 0.0
    m: float = 1.0
    J: float = 1.0
    delta_star: float = 0.05
    admissible: bool = False

    def __post_init__(self):
        for name in ("c_tau", "c_alpha", "c_beta"):
            if not getattr(self, name) > 0.0:
                raise DomainError(f"{name} must be positive")
        if self.c < 0 or self.c0 < 0 or self.c1 < 0:
            raise DomainError("decay constants must be nonnegative")
        if self.n < 0:
            raise DomainError("Sobolev index n must be nonnegative")
        if not self.m > 0:
            raise DomainError("x-regularity index m must be positive")
        if self.J < 1:
            raise DomainError("decay power J must be >= 1")
        if not 0.0 < self.delta_star < 1.0 / 12.0:
            raise DomainError("delta_star must lie in (0, 1/12)")

    def with_(self, **changes):
        return replace(self, **changes)

    def as_dict(self):
        return {k: getattr(self, k) for k in
                ("c_tau", "c_alpha", "c_beta", "c", "c0", "c1", "n", "m", "J",
                 "delta_star", "admissible")}


def default_constants(richardson, epsilon, **indices) -> HypoConstants:
    """The explicit weight triple, taken as written.

    These values fail the third smallness condition at every ``(R, eps)``:
    ``c_beta^2 / c_alpha = 5 (1+a) e^{2g} base`` against a bound of
    ``base = eps^2/(1024 R^2)``, with ``a = 1/(2 sqrt R)`` and ``g = 1/(2 sqrt R - 1)``.
    ``admissible`` records the outcome; :func:`repaired_constants` gives a
    triple that passes.

    Extra keyword arguments (``n``, ``m``, ``J``, ``delta_star``) are passed
    through to :class:`HypoConstants`.
    """
    _check_r_eps(richardson, epsilon)
    R, eps = richardson, epsilon
    sr = math.sqrt(R)
    base = eps ** 2 / (1024.0 * R ** 2)
    g = 1.0 / (2.0 * sr - 1.0)
    c_tau = min(1.0 / 8.0, eps / R) / (32.0 * math.pi)
    c_alpha = base / 50_000.0 * (1.0 + 1.0 / (2.0 * sr)) ** -2 * math.exp(-4.0 * g)
    c_beta = base / 100.0 * (1.0 + 1.0 / (2.0 * sr)) ** -0.5 * math.exp(-g)
    consts = HypoConstants(c_tau=c_tau, c_alpha=c_alpha, c_beta=c_beta, **indices)
    report = check_smallness(consts, R, eps)
    return consts.with_(admissible=report.passed)


def repaired_constants(richardson, epsilon, **indices) -> HypoConstants:
    """A weight triple that provably satisfies all three smallness conditions.

    With ``a = 1/(2 sqrt R)``, ``g = 1/(2 sqrt R - 1)`` and
    ``b = eps^2/(1024 R^2)``::

        c_beta  = b/100  (1+a)^-1 e^{-2g}
        c_alpha = 2e-4 b (1+a)^-2 e^{-4g}

    so that ``c_beta^2/c_alpha = b/2`` and the alpha condition holds with a
    factor 2 to spare.  ``c_tau`` is the same as in :func:`default_constants`.
    """
    _check_r_eps(richardson, epsilon)
    R, eps = richardson, epsilon
    sr = math.sqrt(R)
    base = eps ** 2 / (1024.0 * R ** 2)
    a = 1.0 / (2.0 * sr)
    g = 1.0 / (2.0 * sr - 1.0)
    c_tau = min(1.0 / 8.0, eps / R) / (32.0 * math.pi)
    c_beta = base / 100.0 / (1.0 + a) * math.exp(-2.0 * g)
    c_alpha = 2e-4 * base / (1.0 + a) ** 2 * math.exp(-4.0 * g)
    consts = HypoConstants(c_tau=c_tau, c_alpha=c_alpha, c_beta=c_beta, **indices)
    return consts.with_(admissible=check_smallness(consts, R, eps).passed)


@dataclass(frozen=True)
class SmallnessReport:
    """Margins (bound minus value) of the three smallness conditions.

    The first condition is non-strict, the other two strict.
    """

    tau_margin: float
    alpha_margin: float
    beta_margin: float

    @property
    def flags(self):
        return (self.tau_margin >= 0.0, self.alpha_margin > 0.0, self.beta_margin > 0.0)

    @property
    def passed(self):
        return all(self.flags)


def check_smallness(consts: HypoConstants, richardson, epsilon) -> SmallnessReport:
    R, eps = richardson, epsilon
    sr = math.sqrt(R)
    tau_bound = min(1.0 / 8.0, eps / R) / (32.0 * math.pi)

    # the exponent 2/(2 sqrt R - 1) overflows as R -> 1/4; the product is then inf
    g = 2.0 / (2.0 * sr - 1.0)
    try:
        alpha_value = consts.c_alpha * (1.0 + 1.0 / (2.0 * sr)) * math.exp(g)
    except OverflowError:
        alpha_value = math.inf
    alpha_bound = min(consts.c_beta / 25.0, 1.0 / (2.0 * math.pi))

    beta_value = consts.c_beta ** 2 / consts.c_alpha
    beta_bound = min(eps ** 2 / (1024.0 * R ** 2), 1.0 / 16.0)
    return SmallnessReport(tau_bound - consts.c_tau,
                           alpha_bound - alpha_value,
                           beta_bound - beta_value)
