"""Drift descriptors and the drift-admissibility functionals.

The elliptic functional at radius ``r`` is

    omega(r) = sup_x  int_{B_r(x) ∩ Ω} |b(y)| / |x-y|^(n-1) * d(y) / (d(y) + |x-y|) dy

and its parabolic analogues ``omega_p^-`` / ``omega_p^+`` replace the
Newtonian-type kernel by a Gaussian one over backward / forward cylinders.
The supremum over ``x`` is taken over a fixed deterministic sample of base
points.  Drifts are extended by zero outside the domain.

Every integral is computed in coordinates centred at the base point, where
the kernel singularity cancels against the volume element; the remaining
integrands are integrated with Gauss-Legendre rules on geometrically graded
panels, split wherever the ray leaves the ball or the domain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc
from scipy.integrate import quad

from .errors import DivergenceError, DomainError, UnsupportedFamilyError
from .geometry import DomainModel, elliptic_distance
from .modulus import Modulus, dini_integral, modulus_from_dict
from .quadrature import gauss_legendre, graded_breaks, panel_rule

__all__ = [
    "Drift",
    "ZeroDrift",
    "ConstantDrift",
    "NearBoundaryDrift",
    "LnBoundedDrift",
    "GammaParameter",
    "drift_from_dict",
    "elliptic_base_points",
    "parabolic_base_points",
    "omega_at",
    "omega",
    "omega_parabolic_at",
    "omega_parabolic",
    "local_ln_norm",
    "phi_k",
    "SufficiencyReport",
    "check_sufficiency",
]

ORDER = 8
RATIO_BAND = 3.0


# --------------------------------------------------------------------------
# descriptors


class Drift:
    """Base class for drift descriptors.

    ``magnitude(y, dist)`` returns ``|b|`` at points ``y`` (shape ``(..., n)``)
    given the distance ``dist`` of each point to the (parabolic) boundary;
    ``dist == 0`` marks points outside the domain, where ``b`` vanishes.
    """

    is_zero = False

    def magnitude(self, y, dist):
        raise NotImplementedError

    def direction(self, n):
        """Unit vector carrying the drift (used by the PDE solver)."""
        e = np.zeros(n)
        e[-1] = 1.0
        return e

    def vector(self, y, dist):
        y = np.asarray(y, dtype=float)
        n = y.shape[-1]
        return self.magnitude(y, dist)[..., None] * self.direction(n)

    def scaled(self, k: float) -> "Drift":
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroDrift(Drift):
    is_zero = True

    def magnitude(self, y, dist):
        return np.zeros(np.shape(dist))

    def scaled(self, k):
        return self

    def to_dict(self):
        return {"family": "zero"}


@dataclass(frozen=True)
class ConstantDrift(Drift):
    vector_value: tuple

    def __post_init__(self):
        object.__setattr__(self, "vector_value", tuple(float(v) for v in self.vector_value))

    @property
    def norm(self):
        return math.sqrt(sum(v * v for v in self.vector_value))

    def magnitude(self, y, dist):
        return np.where(np.asarray(dist) > 0, self.norm, 0.0)

    def direction(self, n):
        v = np.asarray(self.vector_value)
        if v.shape[0] != n:
            raise DomainError(f"constant drift has {v.shape[0]} components, domain has n = {n}")
        nv = np.linalg.norm(v)
        return v / nv if nv > 0 else v

    def vector(self, y, dist):
        y = np.asarray(y, dtype=float)
        inside = (np.asarray(dist) > 0)[..., None]
        return np.where(inside, np.asarray(self.vector_value), 0.0) * np.ones(y.shape)

    def scaled(self, k):
        return ConstantDrift(tuple(k * v for v in self.vector_value))

    def to_dict(self):
        return {"family": "constant", "vector": list(self.vector_value)}


@dataclass(frozen=True)
class NearBoundaryDrift(Drift):
    """``|b(y)| = C sigma(d(y)) / d(y)``, pointing along the inward normal ``e_n``."""

    C: float
    sigma: Modulus

    def magnitude(self, y, dist):
        d = np.minimum(np.asarray(dist, dtype=float), 1.0)
        safe = np.where(d > 0, d, 1.0)
        return np.where(d > 0, self.C * self.sigma(safe) / safe, 0.0)

    def weighted(self, dist, rho):
        """``|b| d/(d + rho)`` without forming ``sigma(d)/d`` at tiny ``d``."""
        d = np.minimum(np.asarray(dist, dtype=float), 1.0)
        return np.where(d > 0, self.C * self.sigma(d) / (d + rho), 0.0)

    def scaled(self, k):
        return NearBoundaryDrift(k * self.C, self.sigma)

    def to_dict(self):
        return {"family": "near_boundary", "C": self.C, "sigma": self.sigma.to_dict()}


@dataclass(frozen=True)
class LnBoundedDrift(Drift):
    """Point-singular sample field ``|b(y)| = C sigma(|y-c|) / |y-c|``.

    Its ``L^n`` norm on ``B_rho(c)`` is ``C (|S^{n-1}| int_0^rho
    (sigma(t)/t)^n t^(n-1) dt)^(1/n)``; for ``sigma = Power(a)`` this is a
    constant times ``sigma(rho)``.
    """

    C: float
    sigma: Modulus
    center: tuple = field(default=(0.0, 0.5))

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))

    def magnitude(self, y, dist):
        y = np.asarray(y, dtype=float)
        rad = np.minimum(np.linalg.norm(y - np.asarray(self.center), axis=-1), 1.0)
        safe = np.where(rad > 0, rad, 1.0)
        val = np.where(rad > 0, self.C * self.sigma(safe) / safe, np.inf)
        return np.where(np.asarray(dist) > 0, val, 0.0)

    def scaled(self, k):
        return LnBoundedDrift(k * self.C, self.sigma, self.center)

    def to_dict(self):
        return {"family": "ln_bounded", "C": self.C, "sigma": self.sigma.to_dict(),
                "center": list(self.center)}


@dataclass(frozen=True)
class GammaParameter:
    gamma: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError(f"gamma must be positive, got {self.gamma}")


def drift_from_dict(d: dict) -> Drift:
    """Build a drift from JSON, e.g. ``{"family": "near_boundary", "C": 1.0, "sigma": {...}}``."""
    try:
        fam = d["family"]
        if fam == "zero":
            return ZeroDrift()
        if fam == "constant":
            return ConstantDrift(tuple(d["vector"]))
        if fam == "near_boundary":
            return NearBoundaryDrift(float(d["C"]), modulus_from_dict(d["sigma"]))
        if fam == "ln_bounded":
            return LnBoundedDrift(float(d["C"]), modulus_from_dict(d["sigma"]),
                                  tuple(d.get("center", (0.0, 0.5))))
    except (KeyError, TypeError) as exc:
        raise DomainError(f"malformed drift descriptor {d!r}") from exc
    raise UnsupportedFamilyError(f"unknown drift family {fam!r}")


# --------------------------------------------------------------------------
# base-point samples


def elliptic_base_points(domain: DomainModel) -> np.ndarray:
    """Deterministic 257-point sample of the half ball.

    16 offsets ``x_1`` in ``[-R/2, R/2]`` times 16 heights ``x_n = R 2^-k``
    (``k = 1..16``) form the interior lattice and its geometric
    near-boundary layer; the centre ``(0, ..., 0, R/2)`` completes the set.
    """
    R, n = domain.R, domain.n
    offs = np.linspace(-0.5 * R, 0.5 * R, 16)
    heights = R * 2.0 ** -np.arange(1, 17)
    pts = np.zeros((257, n))
    k = 0
    for h in heights:
        for o in offs:
            pts[k, 0] = o
            pts[k, -1] = h
            k += 1
    pts[256, -1] = 0.5 * R
    return pts


def parabolic_base_points(domain: DomainModel) -> np.ndarray:
    """Base points ``(x; t)`` for the parabolic functionals.

    Heights ``x_n = R 2^-k`` (``k = 1..16``), tangential offsets
    ``{-R/4, 0, R/4}`` when ``n = 2``, times ``t in {0, -R^2/2}``.
    """
    R, n = domain.R, domain.n
    heights = R * 2.0 ** -np.arange(1, 17)
    offs = [0.0] if n == 1 else [-0.25 * R, 0.0, 0.25 * R]
    pts = []
    for t in (0.0, -0.5 * R * R):
        for h in heights:
            for o in offs:
                x = [h] if n == 1 else [o, h]
                pts.append(x + [t])
    return np.asarray(pts)


# --------------------------------------------------------------------------
# elliptic functional


def _ray_exit(x, e, R):
    """Distance along unit directions ``e`` from ``x`` to the half-ball boundary."""
    en = e[..., -1]
    with np.errstate(divide="ignore"):
        plane = np.where(en < 0, x[-1] / np.where(en < 0, -en, 1.0), np.inf)
    xe = e @ x
    sph = -xe + np.sqrt(np.maximum(xe * xe + R * R - x @ x, 0.0))
    return np.minimum(plane, sph)


def _ray_kink(x, e, R, L):
    """First parameter in ``(0, L)`` where ``y_n = R - |y|`` along each ray (else ``L/2``)."""
    en = e[..., -1]
    a = 1.0 - en * en
    c0 = R - x[-1]
    bq = 2.0 * (e @ x) + 2.0 * c0 * en
    cq = x @ x - c0 * c0
    out = np.full(L.shape, np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        disc = bq * bq - 4 * a * cq
        sq = np.sqrt(np.maximum(disc, 0.0))
        for sgn in (-1.0, 1.0):
            root = np.where(a > 1e-14, (-bq + sgn * sq) / (2 * a), -cq / bq)
            ok = (disc >= 0) & (root > 1e-12 * L) & (root < L * (1 - 1e-12)) & np.isnan(out)
            out = np.where(ok, root, out)
    return np.where(np.isnan(out), 0.5 * L, out)


def _angle_breaks_2d(x, r, R):
    br = [0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi, 2 * math.pi]
    xn = x[-1]
    if xn < r:
        a = math.asin(xn / r)
        br += [math.pi + a, 2 * math.pi - a]
    nx = math.hypot(*x)
    if nx > 0:
        c = (R * R - nx * nx - r * r) / (2 * r)
        if abs(c) <= nx:
            phx = math.atan2(x[1], x[0])
            dphi = math.acos(c / nx)
            br += [phx + dphi, phx - dphi]
    for cx in (R, -R):
        br.append(math.atan2(-x[1], cx - x[0]))
    br = np.mod(np.asarray(br), 2 * math.pi)
    br = np.unique(np.round(np.concatenate([br, [0.0, 2 * math.pi]]), 14))
    return br


def _directions(x, r, R, n, order, levels):
    """Direction set (unit vectors, solid-angle weights) for polar integration about ``x``."""
    if n == 2:
        br = _angle_breaks_2d(x, r, R)
        nodes, wts = [], []
        for a, b in zip(br[:-1], br[1:]):
            if b - a < 1e-15:
                continue
            th, w = panel_rule(graded_breaks(a, b, levels, "both"), order)
            nodes.append(th)
            wts.append(w)
        th = np.concatenate(nodes)
        return np.stack([np.cos(th), np.sin(th)], axis=-1), np.concatenate(wts)
    # n == 3: mu = cos(angle from e_n), azimuth phi
    mu_br = [-1.0, 0.0, 1.0]
    if x[-1] < r:
        mu_br.append(-x[-1] / r)
    mu_br = np.unique(mu_br)
    mus, mw = [], []
    for a, b in zip(mu_br[:-1], mu_br[1:]):
        m_, w_ = panel_rule(graded_breaks(a, b, levels, "both"), order)
        mus.append(m_)
        mw.append(w_)
    mu, mw = np.concatenate(mus), np.concatenate(mw)
    phx = math.atan2(x[1], x[0])
    ph_br = np.unique(np.mod(phx + np.arange(9) * 0.25 * math.pi, 2 * math.pi).tolist() + [0.0, 2 * math.pi])
    ph, pw = panel_rule(ph_br, 2 * order)
    MU, PH = np.meshgrid(mu, ph, indexing="ij")
    s = np.sqrt(np.maximum(1.0 - MU**2, 0.0))
    e = np.stack([s * np.cos(PH), s * np.sin(PH), MU], axis=-1).reshape(-1, 3)
    w = (mw[:, None] * pw[None, :]).ravel()
    return e, w


def _levels_for(scale, small):
    if small <= 0:
        return 40
    return int(min(40, max(2, math.ceil(math.log2(max(scale / small, 1.0))) + 3)))


def _polar_integral(x, r, domain, density, order, power_weight=False):
    """``int_{B_r(x) ∩ Ω} density(y, d(y), |x-y|) |x-y|^(1-n) dy`` in polar coordinates.

    With ``power_weight=True`` the factor ``|x-y|^(1-n)`` is dropped (plain
    volume integral), which multiplies the radial integrand by ``rho^(n-1)``.
    """
    n, R = domain.n, domain.R
    x = np.asarray(x, dtype=float)
    dx = float(elliptic_distance(x, R))
    lev_a = _levels_for(r, dx)
    e, we = _directions(x, r, R, n, order, min(lev_a, 24))
    L = np.minimum(_ray_exit(x, e, R), r)
    hits_boundary = L < r * (1 - 1e-13)
    K = _ray_kink(x, e, R, L)

    lev0 = _levels_for(r, dx)
    u1, v1 = panel_rule(graded_breaks(0.0, 1.0, lev0, "left"), order)
    u2, v2 = panel_rule(graded_breaks(0.0, 1.0, 24, "right"), order)
    u2b, v2b = panel_rule(graded_breaks(0.0, 1.0, 2, "right"), order)

    total = 0.0
    for sel, uu, vv in ((hits_boundary, u2, v2), (~hits_boundary, u2b, v2b)):
        if not np.any(sel):
            continue
        es, ws, Ls, Ks = e[sel], we[sel], L[sel], K[sel]
        seg = [(np.zeros_like(Ks), Ks, u1, v1), (Ks, Ls - Ks, uu, vv)]
        for start, length, uu_, vv_ in seg:
            rho = start[:, None] + length[:, None] * uu_[None, :]
            wr = length[:, None] * vv_[None, :]
            y = x + rho[..., None] * es[:, None, :]
            d = elliptic_distance(y, R)
            g = density(y, d, rho)
            if power_weight:
                g = g * rho ** (n - 1)
            total += float(np.sum(ws[:, None] * wr * g))
    return total


def _omega_density(b, weighted):
    if isinstance(b, NearBoundaryDrift) and weighted:
        return lambda y, d, rho: b.weighted(d, rho)
    if weighted:
        return lambda y, d, rho: b.magnitude(y, d) * d / (d + rho)
    return lambda y, d, rho: b.magnitude(y, d)


def omega_at(b: Drift, domain: DomainModel, x, r: float, weighted=True, order=ORDER) -> float:
    """Drift functional integral at a single base point ``x``."""
    if not r > 0:
        raise DomainError(f"omega needs r > 0, got {r}")
    if b.is_zero:
        return 0.0
    return _polar_integral(x, r, domain, _omega_density(b, weighted), order)


def omega(b: Drift, domain: DomainModel, r: float, weighted=True, base_points=None,
          order=ORDER) -> float:
    """``omega(r)``: maximum of :func:`omega_at` over the base-point sample.

    Raises
    ------
    DomainError
        If ``r`` is not in ``(0, 2R]``.
    DivergenceError
        If the integral is infinite (non-admissible drift).
    """
    if domain.kind != "elliptic":
        raise DomainError("omega needs an elliptic domain")
    if not 0 < r <= 2 * domain.R:
        raise DomainError(f"omega needs 0 < r <= 2R, got {r}")
    if b.is_zero:
        return 0.0
    pts = elliptic_base_points(domain) if base_points is None else np.atleast_2d(base_points)
    best = max(omega_at(b, domain, x, r, weighted, order) for x in pts)
    if not math.isfinite(best):
        raise DivergenceError(f"drift functional is infinite at r = {r}")
    return best


# --------------------------------------------------------------------------
# parabolic functionals


def _parabolic_dist(y, s, R):
    d = np.minimum(np.minimum(y[..., -1], np.sqrt(np.maximum(s + R * R, 0.0))),
                   R - np.linalg.norm(y, axis=-1))
    inside = (s < 0) & (s > -R * R)
    return np.where(inside, np.maximum(d, 0.0), 0.0)


def omega_parabolic_at(b: Drift, domain: DomainModel, point, r: float, gamma: float = 1.0,
                       side: str = "minus", order: int = ORDER, weighted: bool = True) -> float:
    """Space-time drift integral at one base point ``(x; t)``.

    Uses ``rho = |x-y|/sqrt|t-s|`` and ``tau = sqrt(|x-y|^2 + |t-s|)``; in
    these variables the cylinder ``Q_r`` becomes ``tau < r`` (any ``rho``) or
    ``r < tau < r sqrt2`` with ``sqrt(tau^2-r^2)/r < rho < r/sqrt(tau^2-r^2)``
    and the measure reduces to ``2 rho^(n-1)/sqrt(1+rho^2) drho dtau dS``.
    """
    if side not in ("minus", "plus"):
        raise DomainError("side must be 'minus' or 'plus'")
    if not r > 0:
        raise DomainError(f"omega_parabolic needs r > 0, got {r}")
    if b.is_zero:
        return 0.0
    n, R = domain.n, domain.R
    p = np.asarray(point, dtype=float)
    x, t = p[:-1], p[-1]
    sgn = -1.0 if side == "minus" else 1.0
    dp0 = float(_parabolic_dist(x[None, :], np.array([t - 1e-300 if side == "minus" else t]), R)[0])
    dp0 = max(dp0, x[-1]) if dp0 == 0 else dp0

    if n == 1:
        dirs, dw = np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    else:
        br = np.unique(np.concatenate([np.arange(9) * 0.25 * math.pi]))
        th, dw = panel_rule(br, order)
        dirs = np.stack([np.cos(th), np.sin(th)], axis=-1)

    lev = _levels_for(r, dp0)
    t1, w1 = panel_rule(graded_breaks(0.0, r, lev, "left"), order)
    t2, w2 = panel_rule(graded_breaks(r, r * math.sqrt(2), 20, "both"), order)
    taus, tw = np.concatenate([t1, t2]), np.concatenate([w1, w2])

    xg, wg = gauss_legendre(order)
    rho_max = math.sqrt(40.0 / gamma)
    # rho limits per tau
    k = np.sqrt(np.maximum(taus**2 - r * r, 0.0))
    lo = np.where(taus <= r, 0.0, k / r)
    with np.errstate(divide="ignore"):
        hi = np.where(taus <= r, rho_max, np.minimum(r / np.where(k > 0, k, 1.0), rho_max))
    # rho panels [lo, lo+1], [lo+1, lo+3], [lo+3, hi] clipped
    edges = np.stack([lo, np.minimum(lo + 1, hi), np.minimum(lo + 3, hi), hi], axis=-1)
    a, bb = edges[:, :-1], edges[:, 1:]
    half = 0.5 * (bb - a)
    rho = (half[..., None] * xg + (0.5 * (a + bb))[..., None]).reshape(len(taus), -1)
    wr = (half[..., None] * wg).reshape(len(taus), -1)

    T = taus[:, None]
    q = rho * T / np.sqrt(1 + rho * rho)
    ds = T * T / (1 + rho * rho)
    s = t + sgn * ds
    kern = 2.0 * np.exp(-gamma * rho * rho) * rho ** (n - 1) / np.sqrt(1 + rho * rho)
    y = x + q[..., None, None] * dirs[None, None, :, :]
    S = np.broadcast_to(s[..., None], y.shape[:-1])
    dp = _parabolic_dist(y, S, R)
    if not weighted:
        dens = b.magnitude(y, dp)
    elif isinstance(b, NearBoundaryDrift):
        dens = b.weighted(dp, T[..., None])
    else:
        dens = b.magnitude(y, dp) * dp / (dp + T[..., None])
    val = np.einsum("ij,ijk,k->i", wr * kern, dens, dw)
    return float(np.dot(tw, val))


def omega_parabolic(b: Drift, domain: DomainModel, r: float, gamma: GammaParameter | float = 1.0,
                    side: str = "minus", base_points=None, order: int = ORDER) -> float:
    """``omega_p^-(r)`` (``side="minus"``) or ``omega_p^+(r)`` (``side="plus"``)."""
    if domain.kind != "parabolic":
        raise DomainError("omega_parabolic needs a parabolic domain")
    if not 0 < r <= 2 * domain.R:
        raise DomainError(f"omega_parabolic needs 0 < r <= 2R, got {r}")
    g = gamma.gamma if isinstance(gamma, GammaParameter) else float(gamma)
    if not g > 0:
        raise DomainError("gamma must be positive")
    if b.is_zero:
        return 0.0
    pts = parabolic_base_points(domain) if base_points is None else np.atleast_2d(base_points)
    best = max(omega_parabolic_at(b, domain, p, r, g, side, order) for p in pts)
    if not math.isfinite(best):
        raise DivergenceError(f"parabolic drift functional is infinite at r = {r}")
    return best


# --------------------------------------------------------------------------
# L^n bound and shell integrals


def local_ln_norm(b: Drift, domain: DomainModel, rho: float, base_points=None,
                  order: int = ORDER) -> float:
    """``sup_x ||b||_{L^n(B_rho(x) ∩ Ω)}`` over the base-point sample."""
    if not 0 < rho <= domain.R:
        raise DomainError(f"local_ln_norm needs 0 < rho <= R, got {rho}")
    if b.is_zero:
        return 0.0
    n = domain.n
    if base_points is None:
        pts = elliptic_base_points(domain)
        if isinstance(b, LnBoundedDrift):
            pts = np.vstack([pts, np.asarray(b.center)[None, :]])
    else:
        pts = np.atleast_2d(base_points)
    dens = lambda y, d, r_: b.magnitude(y, d) ** n  # noqa: E731
    best = max(_polar_integral(x, rho, domain, dens, order, power_weight=True) for x in pts)
    return best ** (1.0 / n)


def _shell_inner(X, c, n):
    # int_0^X exp(-c u^2) u^(n-1) du
    return gammainc(n / 2.0, c * X * X) * math.gamma(n / 2.0) / (2.0 * c ** (n / 2.0))


def phi_k(gamma: GammaParameter | float, r: float, k: int, n: int) -> float:
    """Gaussian shell integral over ``Q_{r/2^k} minus Q_{r/2^(k+1)}``.

    Integrand ``exp(-gamma (n+1)/n |y|^2/(-s)) (-s)^(-(n+1)^2/(2n))``.
    The ``|y|`` integral is done in closed form (incomplete gamma), the time
    integral by adaptive quadrature in ``w = -s/rho^2``.
    """
    g = gamma.gamma if isinstance(gamma, GammaParameter) else float(gamma)
    if not r > 0 or k < 0 or n < 1:
        raise DomainError("phi_k needs r > 0, k >= 0, n >= 1")
    rho = r / 2.0**k
    c = g * (n + 1) / n
    p = (n + 1) ** 2 / (2.0 * n)
    area = 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)

    # -s = rho^2 w; q-integral of exp(-c q^2/(-s)) q^(n-1) over (a, b) equals
    # (-s)^(n/2) [g(b/sqrt(-s)) - g(a/sqrt(-s))]
    def top(w):
        return w ** (n / 2.0 - p) * _shell_inner(1.0 / math.sqrt(w), c, n)

    def low(w):
        X = 1.0 / math.sqrt(w)
        return w ** (n / 2.0 - p) * (_shell_inner(X, c, n) - _shell_inner(0.5 * X, c, n))

    i1 = quad(top, 0.25, 1.0, epsabs=0, epsrel=1e-12, limit=200)[0]
    i2 = quad(low, 0.0, 0.25, epsabs=0, epsrel=1e-12, limit=200, points=[1e-3, 1e-2])[0]
    # rho^(n + 2 - 2p) = rho^(-1/n)
    return area * (i1 + i2) * rho ** (n + 2.0 - 2.0 * p)


# --------------------------------------------------------------------------
# sufficiency check


@dataclass
class SufficiencyReport:
    rows: list  # dicts with r, omega, bound_rhs, ratio
    fitted_constant: float
    verdict: bool
    rhs_label: str

    def csv_rows(self):
        return [(row["r"], row["omega"], row["bound_rhs"], row["ratio"]) for row in self.rows]


def _rhs(b, sigma, domain, r):
    if domain.kind == "elliptic":
        if isinstance(b, NearBoundaryDrift):
            return "J(r)", dini_integral(sigma, min(r, 1.0))
        return "J(2r)", dini_integral(sigma, min(2 * r, 1.0))
    if isinstance(b, NearBoundaryDrift):
        return "J(r*sqrt2)", dini_integral(sigma, min(r * math.sqrt(2), 1.0))
    return "J(2r)", dini_integral(sigma, min(2 * r, 1.0))


def _condition_row(args):
    b, sigma, domain, r, gamma, base_points, order = args
    label, rhs = _rhs(b, sigma, domain, r)
    if domain.kind == "elliptic":
        w = omega(b, domain, r, base_points=base_points, order=order)
    else:
        w = omega_parabolic(b, domain, r, gamma, "minus", base_points=base_points, order=order)
    return label, {"r": float(r), "omega": w, "bound_rhs": rhs, "ratio": w / rhs}


def check_sufficiency(b: Drift, sigma: Modulus, domain: DomainModel, r_grid, gamma=1.0,
                      base_points=None, order: int = ORDER, jobs: int = 1) -> SufficiencyReport:
    """Compare the drift functional with its sufficient-condition bound on a radius grid.

    ``fitted_constant`` is the largest ratio ``omega / rhs``; the verdict
    passes when every ratio is within a factor 3 of the median ratio.
    Radii are evaluated independently (in a process pool when
    ``jobs > 1``) and reported in grid order.
    """
    if not isinstance(b, (ZeroDrift, ConstantDrift, NearBoundaryDrift, LnBoundedDrift)):
        raise UnsupportedFamilyError(f"no sufficient condition known for {type(b).__name__}")
    if not sigma.is_dini:
        raise DivergenceError(f"modulus {sigma.to_dict()} is not Dini; J_sigma diverges")
    args = [(b, sigma, domain, float(r), gamma, base_points, order) for r in r_grid]
    if jobs > 1 and len(args) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(_condition_row, args))
    else:
        out = [_condition_row(a) for a in args]
    rows = [row for _, row in out]
    label = out[-1][0] if out else ""
    ratios = np.array([row["ratio"] for row in rows])
    if len(ratios) == 0 or np.all(ratios == 0):
        return SufficiencyReport(rows, 0.0, True, label)
    med = float(np.median(ratios))
    verdict = bool(np.all(ratios <= RATIO_BAND * med) and np.all(ratios >= med / RATIO_BAND))
    return SufficiencyReport(rows, float(ratios.max()), verdict, label)
