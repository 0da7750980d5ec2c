"""Local boundary models: paraboloid graphs, flattening, distances.

Near the boundary point (the origin) the domain is modelled by the extremal
paraboloid ``x_n = |x'| sigma(|x'|)`` (elliptic) or
``x_n = tau sigma(tau)``, ``tau = sqrt(|x'|^2 - t)`` (parabolic).  After
flattening, the local domain is the half ball ``B_R ∩ {x_n > 0}`` or the
half cylinder ``(B_R ∩ {x_n > 0}) x (-R^2, 0)``.

Points are numpy arrays ``(x_1, ..., x_n)`` for the elliptic model and
``(x_1, ..., x_n, t)`` for the parabolic one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .modulus import Modulus, modulus_from_dict

__all__ = [
    "ParaboloidBoundary",
    "DomainModel",
    "boundary_height",
    "flatten",
    "unflatten",
    "flatten_drift_bound",
    "flatten_drift_omega",
    "elliptic_distance",
    "parabolic_distance",
    "parabolic_distance_formula",
    "domain_from_dict",
]

BISECTION_STEPS = 50


@dataclass(frozen=True)
class ParaboloidBoundary:
    sigma: Modulus
    R: float = 1.0
    kind: str = "elliptic"

    def __post_init__(self):
        if self.kind not in ("elliptic", "parabolic"):
            raise DomainError(f"unknown boundary kind {self.kind!r}")
        if not 0 < self.R <= 1:
            raise DomainError("boundary neighbourhood radius must lie in (0, 1]")


@dataclass(frozen=True)
class DomainModel:
    """Flattened local domain.

    ``kind`` is ``"elliptic"`` for the half ball ``B_R ∩ R^n_+`` and
    ``"parabolic"`` for the half cylinder ``Q_R ∩ R^{n+1}_+``; ``n`` is the
    spatial dimension.
    """

    kind: str = "elliptic"
    n: int = 2
    R: float = 1.0
    sigma: Modulus | None = None

    def __post_init__(self):
        if self.kind not in ("elliptic", "parabolic"):
            raise DomainError(f"unknown domain kind {self.kind!r}")
        allowed = (2, 3) if self.kind == "elliptic" else (1, 2)
        if self.n not in allowed:
            raise DomainError(f"{self.kind} domain supports n in {allowed}, got {self.n}")
        if not self.R > 0:
            raise DomainError("domain radius must be positive")

    def to_dict(self):
        d = {"kind": self.kind, "n": self.n, "R": self.R}
        if self.sigma is not None:
            d["sigma"] = self.sigma.to_dict()
        return d


def domain_from_dict(d: dict) -> DomainModel:
    try:
        sigma = modulus_from_dict(d["sigma"]) if "sigma" in d else None
        return DomainModel(d["kind"], int(d["n"]), float(d.get("R", 1.0)), sigma)
    except (KeyError, TypeError) as exc:
        raise DomainError(f"malformed domain descriptor {d!r}") from exc


def _tau(xp, t):
    return math.sqrt(float(np.dot(xp, xp)) - t)


def boundary_height(boundary: ParaboloidBoundary, xp, t=None) -> float:
    """Height of the extremal paraboloid above the tangent plane at ``x'``."""
    xp = np.atleast_1d(np.asarray(xp, dtype=float))
    if boundary.kind == "elliptic":
        rho = float(np.linalg.norm(xp))
        if rho > boundary.R:
            raise DomainError(f"|x'| = {rho} outside the neighbourhood R = {boundary.R}")
        return rho * float(boundary.sigma(rho))
    if t is None or t > 0:
        raise DomainError("parabolic boundary height needs a time t <= 0")
    tau = _tau(xp, t)
    if tau > boundary.R:
        raise DomainError(f"sqrt(|x'|^2 - t) = {tau} outside the neighbourhood R = {boundary.R}")
    return tau * float(boundary.sigma(tau))


def _split(point, boundary):
    p = np.asarray(point, dtype=float)
    if boundary.kind == "elliptic":
        return p[:-1], p[-1], None
    return p[:-2], p[-2], p[-1]


def flatten(point, boundary: ParaboloidBoundary) -> np.ndarray:
    """Shift ``x_n`` down by the boundary height; ``x'`` and ``t`` are untouched."""
    xp, xn, t = _split(point, boundary)
    out = np.array(point, dtype=float)
    idx = -1 if boundary.kind == "elliptic" else -2
    out[idx] = xn - boundary_height(boundary, xp, t)
    return out


def unflatten(point, boundary: ParaboloidBoundary) -> np.ndarray:
    """Inverse of :func:`flatten`."""
    xp, xn, t = _split(point, boundary)
    out = np.array(point, dtype=float)
    idx = -1 if boundary.kind == "elliptic" else -2
    out[idx] = xn + boundary_height(boundary, xp, t)
    return out


def flatten_drift_bound(sigma: Modulus, xp, t: float) -> float:
    """Size of the drift term created by flattening a parabolic paraboloid.

    Returns ``sigma(tau)/tau + sigma'(tau)`` with ``tau = sqrt(|x'|^2 - t)``;
    the extra drift component is bounded by a constant times this value.
    At ``tau = 0`` the value is ``inf`` unless ``sigma`` is Lipschitz.
    """
    xp = np.atleast_1d(np.asarray(xp, dtype=float))
    tau = _tau(xp, t)
    if not 0 <= tau <= 1:
        raise DomainError(f"tau = {tau} must lie in [0, 1]")
    if tau == 0:
        r0 = sigma._ratio_at_zero()
        return 2.0 * r0 if math.isfinite(r0) else math.inf
    return float(sigma.ratio(tau) + sigma.derivative(tau))


def flatten_drift_omega(sigma: Modulus, r: float, gamma: float = 1.0, n: int = 2,
                        order: int = 48) -> float:
    """Backward drift functional of the flattening drift at the origin.

    Integrates ``(sigma(tau)/tau + sigma'(tau)) exp(-gamma |y|^2/(-s)) /
    (-s)^((n+1)/2)`` over the backward cylinder ``Q_r`` (``n`` spatial
    dimensions, ``tau = sqrt(|y'|^2 - s)``).  The ``y_n`` integral is done in
    closed form (error function); the remaining ``(|y'|, -s)`` integral is
    taken in the variables ``rho = |y'|/sqrt(-s)`` and ``tau``, whose
    Jacobian cancels the kernel singularity.
    """
    from scipy.special import erf

    from .quadrature import graded_rule, gauss_legendre

    if n not in (2, 3):
        raise DomainError("flattening drift needs n in {2, 3}")
    if not 0 < r * math.sqrt(2) <= 1:
        raise DomainError("need 0 < r*sqrt(2) <= 1 so that tau stays in (0, 1]")
    sphere = 2.0 if n == 2 else 2.0 * math.pi  # measure of the unit sphere in R^(n-1)
    rho_max = math.sqrt(40.0 / gamma)

    # tau panels: (0, r] where rho is unrestricted, (r, r sqrt2) where it is bounded
    tau1, w1 = graded_rule(0.0, r, order, levels=30)
    tau2, w2 = graded_rule(r, r * math.sqrt(2), order, levels=0)
    taus = np.concatenate([tau1, tau2])
    wts = np.concatenate([w1, w2])
    f = sigma.ratio(taus) + sigma.derivative(taus)

    xg, wg = gauss_legendre(order)
    total = 0.0
    for tau, wt, ft in zip(taus, wts, f):
        if tau <= r:
            lo, hi = 0.0, rho_max
        else:
            k = math.sqrt(tau * tau - r * r)
            lo, hi = k / r, min(r / k, rho_max)
        if hi <= lo:
            continue
        # split the rho range so the Gaussian and the ball cutoff are both resolved
        edges = np.unique(np.clip([lo, lo + 1.0, lo + 3.0, hi], lo, hi))
        acc = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            rho = 0.5 * (b - a) * xg + 0.5 * (b + a)
            s_ = tau * tau / (1.0 + rho * rho)  # -s
            q2 = rho * rho * s_  # |y'|^2
            half = np.sqrt(np.maximum(r * r - q2, 0.0))
            yn = np.sqrt(math.pi * s_ / gamma) * erf(np.sqrt(gamma / s_) * half)
            # y' measure q^(n-2) dq, kernel (-s)^{-(n+1)/2} e^{-gamma rho^2}, Jacobian 2 tau^2/(1+rho^2)^{3/2}
            g = (sphere * np.sqrt(q2) ** (n - 2) * s_ ** (-(n + 1) / 2.0)
                 * np.exp(-gamma * rho * rho) * yn * 2.0 * tau * tau / (1.0 + rho * rho) ** 1.5)
            acc += 0.5 * (b - a) * float(np.dot(wg, g))
        total += wt * ft * acc
    return total


def elliptic_distance(y, R: float = 1.0):
    """Distance to the boundary of the half ball ``B_R ∩ {y_n > 0}``.

    ``y`` has shape ``(..., n)``; points outside the domain get 0.
    """
    y = np.asarray(y, dtype=float)
    d = np.minimum(y[..., -1], R - np.linalg.norm(y, axis=-1))
    return np.maximum(d, 0.0)


def parabolic_distance_formula(point, domain: DomainModel) -> float:
    """Closed form ``min(x_n, sqrt(t + R^2), R - |x|)`` on the half cylinder."""
    p = np.asarray(point, dtype=float)
    x, t = p[:-1], p[-1]
    return max(0.0, min(x[-1], math.sqrt(max(t + domain.R**2, 0.0)),
                        domain.R - float(np.linalg.norm(x))))


def _cylinder_meets_parabolic_boundary(x, t, rho, R):
    """Does the open backward cylinder ``B_rho(x) x (t - rho^2, t)`` meet the parabolic boundary?

    The parabolic boundary of the half cylinder consists of the flat face
    ``{y_n = 0, |y| <= R}``, the lateral face ``{|y| = R, y_n >= 0}`` (both
    for ``-R^2 <= s <= 0``) and the bottom ``{s = -R^2}``.
    """
    if rho <= 0:
        return False
    # any open time window (t - rho^2, t) with t in [-R^2, 0] meets [-R^2, 0]
    dist_x = float(np.linalg.norm(x))
    # flat face: the ball reaches y_n = 0 at a point with |y'| = |x'| < R
    if x[-1] < rho:
        return True
    # lateral face: nearest sphere point x R/|x| has y_n >= 0
    if R - dist_x < rho:
        return True
    # bottom: the time window extends below -R^2 while the ball contains x
    if t - rho * rho < -R * R:
        return True
    return False


def parabolic_distance(point, domain: DomainModel) -> float:
    """Parabolic distance to the parabolic boundary, by bisection on the cylinder radius."""
    if domain.kind != "parabolic":
        raise DomainError("parabolic_distance needs a parabolic domain")
    p = np.asarray(point, dtype=float)
    x, t = p[:-1], p[-1]
    R = domain.R
    if x.shape[0] != domain.n:
        raise DomainError(f"point has {x.shape[0]} spatial coordinates, domain has n = {domain.n}")
    if x[-1] < 0 or np.linalg.norm(x) > R or not -R * R <= t <= 0:
        raise DomainError(f"point {p} lies outside the closed half cylinder")
    lo, hi = 0.0, 2.0 * R
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if _cylinder_meets_parabolic_boundary(x, t, mid, R):
            hi = mid
        else:
            lo = mid
    return lo
