"""Moduli of continuity and the Dini calculus built on them.

A modulus ``sigma`` maps length ratios in ``[0, 1]`` to nonnegative numbers,
vanishes at zero, is nondecreasing and (on the range where the family
allows it) has ``sigma(t)/t`` nonincreasing.  Three parametric families are
provided, plus a positive multiple of any of them:

==============  ===========================================
``Linear(c)``   ``c * t``
``Power(a)``    ``t**a`` with ``0 < a <= 1``
``LogPower(b)`` ``(1 + ln(1/t))**(-b)`` with ``b > 0``
``Scaled(c,m)`` ``c * m(t)``
==============  ===========================================

Integrals of ``sigma(t)/t`` are evaluated after the substitution
``t = exp(-u)``, which turns ``sigma(t)/t dt`` into ``sigma(exp(-u)) du``
and removes the singularity at ``t = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import DivergenceError, DomainError

__all__ = [
    "Modulus",
    "Linear",
    "Power",
    "LogPower",
    "Scaled",
    "eval_modulus",
    "smooth_hat",
    "dini_integral",
    "is_dini",
    "modulus_from_dict",
]

HAT_TOL = 1e-10
DINI_TOL = 1e-8


class Modulus:
    """Base class of the parametric modulus families.

    Subclasses implement ``_value`` and ``_derivative`` on arrays of
    ``t`` in ``(0, 1]``; the base class handles ``t = 0`` and broadcasting.
    """

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(t > 0, self._value(np.where(t > 0, t, 1.0)), 0.0)
        return out[()] if out.ndim == 0 else out

    def derivative(self, t):
        """Analytic derivative ``sigma'(t)`` for ``t`` in ``(0, 1]``."""
        t = np.asarray(t, dtype=float)
        out = self._derivative(t)
        return out[()] if np.ndim(out) == 0 else out

    def ratio(self, t):
        """``sigma(t)/t``; infinite at ``t = 0`` unless the family is Lipschitz."""
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(t > 0, self(t) / np.where(t > 0, t, 1.0), self._ratio_at_zero())
        return out[()] if out.ndim == 0 else out

    def _ratio_at_zero(self):
        return math.inf

    def at_log(self, u: float) -> float:
        """``sigma(exp(-u))`` evaluated without underflow for large ``u``."""
        return float(self._value(math.exp(-u)))

    @property
    def is_dini(self) -> bool:
        raise NotImplementedError

    @property
    def monotone_limit(self) -> float:
        """Largest ``T <= 1`` with ``sigma(t)/t`` nonincreasing on ``(0, T]``."""
        return 1.0

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Linear(Modulus):
    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError(f"Linear modulus needs c > 0, got {self.c}")

    def _value(self, t):
        return self.c * t

    def _derivative(self, t):
        return np.full_like(t, self.c, dtype=float)

    def _ratio_at_zero(self):
        return self.c

    def at_log(self, u):
        return self.c * math.exp(-u)

    @property
    def is_dini(self):
        return True

    def to_dict(self):
        return {"family": "linear", "c": self.c}


@dataclass(frozen=True)
class Power(Modulus):
    alpha: float

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise DomainError(f"Power modulus needs 0 < alpha <= 1, got {self.alpha}")

    def _value(self, t):
        return t**self.alpha

    def _derivative(self, t):
        with np.errstate(divide="ignore"):
            return self.alpha * t ** (self.alpha - 1.0)

    def _ratio_at_zero(self):
        return 1.0 if self.alpha == 1 else math.inf

    def at_log(self, u):
        return math.exp(-self.alpha * u)

    @property
    def is_dini(self):
        return True

    def to_dict(self):
        return {"family": "power", "alpha": self.alpha}


@dataclass(frozen=True)
class LogPower(Modulus):
    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError(f"LogPower modulus needs beta > 0, got {self.beta}")

    def _value(self, t):
        return (1.0 - np.log(t)) ** (-self.beta)

    def _derivative(self, t):
        with np.errstate(divide="ignore"):
            return self.beta * (1.0 - np.log(t)) ** (-self.beta - 1.0) / t

    def at_log(self, u):
        return (1.0 + u) ** (-self.beta)

    @property
    def is_dini(self):
        return self.beta > 1

    @property
    def monotone_limit(self):
        # d/dt log(sigma/t) = (beta/(1 + ln(1/t)) - 1)/t changes sign at t = e^(1-beta)
        return min(1.0, math.exp(1.0 - self.beta))

    def to_dict(self):
        return {"family": "logpower", "beta": self.beta}


@dataclass(frozen=True)
class Scaled(Modulus):
    c: float
    inner: Modulus

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError(f"Scaled modulus needs c > 0, got {self.c}")

    def _value(self, t):
        return self.c * self.inner._value(t)

    def _derivative(self, t):
        return self.c * self.inner._derivative(t)

    def _ratio_at_zero(self):
        return self.c * self.inner._ratio_at_zero()

    def at_log(self, u):
        return self.c * self.inner.at_log(u)

    @property
    def is_dini(self):
        return self.inner.is_dini

    @property
    def monotone_limit(self):
        return self.inner.monotone_limit

    def to_dict(self):
        return {"family": "scaled", "c": self.c, "inner": self.inner.to_dict()}


def modulus_from_dict(d: dict) -> Modulus:
    """Build a modulus from its JSON form, e.g. ``{"family": "power", "alpha": 0.5}``."""
    try:
        family = d["family"]
        if family == "linear":
            return Linear(float(d.get("c", 1.0)))
        if family == "power":
            return Power(float(d["alpha"]))
        if family == "logpower":
            return LogPower(float(d["beta"]))
        if family == "scaled":
            return Scaled(float(d["c"]), modulus_from_dict(d["inner"]))
    except (KeyError, TypeError) as exc:
        raise DomainError(f"malformed modulus descriptor {d!r}") from exc
    raise DomainError(f"unknown modulus family {family!r}")


def eval_modulus(sigma: Modulus, t: float) -> float:
    """Evaluate ``sigma(t)`` for a length ratio ``t`` in ``[0, 1]``."""
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"modulus argument must lie in [0, 1], got {t}")
    return float(sigma(t))


def _log_integral(sigma, lo, hi, tol):
    # int_{exp(-hi)}^{exp(-lo)} sigma(t)/t dt in the variable u = -ln t
    f = sigma.at_log
    if math.isfinite(hi):
        return quad(f, lo, hi, epsabs=tol * 1e-2, epsrel=1e-13, limit=200)[0]
    # finite head plus infinite tail keeps the algebraic LogPower tail resolved
    mid = lo + 50.0
    head = quad(f, lo, mid, epsabs=tol * 1e-2, epsrel=1e-13, limit=200)[0]
    tail = quad(f, mid, math.inf, epsabs=tol * 1e-2, epsrel=1e-13, limit=200)[0]
    return head + tail


def smooth_hat(sigma: Modulus, r: float) -> float:
    """C^1 regularisation ``2 * int_{r/2}^{r} sigma(t)/t dt``.

    The result lies between ``sigma(r)`` and ``2 sigma(r/2)`` whenever
    ``sigma(t)/t`` is nonincreasing on ``[r/2, r]``.
    """
    if not 0.0 < r <= 1.0:
        raise DomainError(f"smooth_hat needs 0 < r <= 1, got {r}")
    lo = -math.log(r)
    return 2.0 * _log_integral(sigma, lo, lo + math.log(2.0), HAT_TOL)


def is_dini(sigma: Modulus) -> bool:
    """Whether ``int_0^1 sigma(t)/t dt`` is finite (decided analytically)."""
    return sigma.is_dini


def dini_integral(sigma: Modulus, s: float) -> float:
    """``J_sigma(s) = int_0^s sigma(t)/t dt`` by quadrature.

    Raises
    ------
    DivergenceError
        If ``sigma`` is not a Dini modulus.
    DomainError
        If ``s`` is outside ``[0, 1]``.
    """
    if not 0.0 <= s <= 1.0:
        raise DomainError(f"dini_integral needs 0 <= s <= 1, got {s}")
    if not sigma.is_dini:
        raise DivergenceError(f"modulus {sigma.to_dict()} is not Dini; J_sigma diverges")
    if s == 0.0:
        return 0.0
    return _log_integral(sigma, -math.log(s), math.inf, DINI_TOL)
