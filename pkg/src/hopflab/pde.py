"""Finite-volume solvers for the barrier problems.

Elliptic problems live on the annulus ``A_rho = {rho/2 < |x - x^rho| < rho}``
with ``x^rho = (0, ..., 0, rho)``, so that the outer circle passes through
the origin.  Parabolic problems live on the cylinder
``B_rho(x^rho) x (-rho^2, 0)``.  The operator is

    L u = -D_i (a^{ij} D_j u) + b^i D_i u        (plus d/dt in the parabolic case)

discretised in conservation form on a body-fitted polar grid about
``x^rho``.  In polar coordinates the diffusion tensor becomes
``[[r a_rr, a_rt], [a_tr, a_tt / r]]`` (``a_rr = e_r.A e_r`` etc.) and the
flux balance is taken over ``dr dtheta`` cells.  The three-dimensional
annulus is solved in axisymmetric spherical coordinates ``(r, theta)``
with ``theta`` measured from the direction ``-e_n``.

Drift terms are integrated as ``|V| b.grad u`` with central differences,
switching to first-order upwinding in any direction whose cell Peclet
number exceeds 2; this keeps the system an M-matrix and therefore the
discrete maximum principle intact.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .drift import Drift, ZeroDrift
from .errors import ConvergenceError, DomainError, GeometryError, InvariantViolation
from .geometry import elliptic_distance
from .modulus import Modulus

__all__ = [
    "IdentityA",
    "ConstantA",
    "IsotropicPerturbation",
    "CoefficientField",
    "AnnulusProblem",
    "CylinderProblem",
    "DiscreteField",
    "solve_annulus",
    "solve_cylinder",
    "monotone_time_steps",
    "normal_derivative_origin",
    "cutoff_phi",
    "discrete_green_column",
    "gradient_operator",
    "assemble_annulus",
]

RESIDUAL_TOL = 1e-10
PECLET_LIMIT = 2.0


# --------------------------------------------------------------------------
# coefficient fields


@dataclass(frozen=True)
class IdentityA:
    isotropic = True

    def scalar(self, x):
        return np.ones(np.shape(x)[:-1])

    def to_dict(self):
        return {"kind": "identity"}


@dataclass(frozen=True)
class ConstantA:
    """Frozen constant matrix ``A_0``."""

    matrix: tuple

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DomainError("constant coefficient matrix must be square")
        if not np.allclose(m, m.T, rtol=0, atol=1e-14):
            raise DomainError("constant coefficient matrix must be symmetric")
        object.__setattr__(self, "matrix", tuple(tuple(float(v) for v in row) for row in m))

    @property
    def array(self):
        return np.asarray(self.matrix)

    @property
    def isotropic(self):
        m = self.array
        return bool(np.all(m == m[0, 0] * np.eye(m.shape[0])))

    def scalar(self, x):
        if not self.isotropic:
            raise DomainError("anisotropic matrix has no scalar form")
        return np.full(np.shape(x)[:-1], self.array[0, 0])

    def to_dict(self):
        return {"kind": "constant", "matrix": [list(r) for r in self.matrix]}


@dataclass(frozen=True)
class IsotropicPerturbation:
    """``a(x) = (1 + eps sigma(|x - x0|) h(x)) I`` with ``x0`` the origin.

    ``h(x) = (rho - x_n) / max(|x - x^rho|, rho/2)``: on the annulus this is
    the cosine of the angle between ``x - x^rho`` and ``-e_n`` (close to 1
    near the boundary point); inside ``B_{rho/2}(x^rho)`` it continues
    linearly, so ``h`` is Lipschitz with constant ``2/rho`` and ``|h| <= 1``
    on the whole ball.
    """

    eps: float
    sigma: Modulus
    rho: float
    isotropic = True

    def scalar(self, x):
        x = np.asarray(x, dtype=float)
        rad = np.minimum(np.linalg.norm(x, axis=-1), 1.0)
        rel = x.copy()
        rel[..., -1] -= self.rho
        nr = np.maximum(np.linalg.norm(rel, axis=-1), 0.5 * self.rho)
        h = -rel[..., -1] / nr
        return 1.0 + self.eps * self.sigma(rad) * h

    def to_dict(self):
        return {"kind": "perturbed", "eps": self.eps, "sigma": self.sigma.to_dict(), "rho": self.rho}


@dataclass(frozen=True)
class CoefficientField:
    """Principal coefficients plus drift, with the regularity data they must satisfy.

    ``modulus`` (optional) is the declared modulus of continuity of ``a``;
    ``R`` is the radius of the flattened domain used for the drift's
    boundary distance.
    """

    a: object = field(default_factory=IdentityA)
    b: Drift = field(default_factory=ZeroDrift)
    nu: float = 0.5
    modulus: Modulus | None = None
    R: float = 1.0

    def __post_init__(self):
        if not 0 < self.nu <= 1:
            raise DomainError(f"ellipticity constant must lie in (0, 1], got {self.nu}")

    @property
    def isotropic(self):
        return self.a.isotropic

    def scalar(self, x):
        return self.a.scalar(x)

    def matrix(self, x):
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        if self.isotropic:
            return self.scalar(x)[..., None, None] * np.eye(n)
        return np.broadcast_to(self.a.array, x.shape[:-1] + (n, n))

    def drift_vector(self, x):
        x = np.asarray(x, dtype=float)
        if self.b.is_zero:
            return np.zeros(x.shape)
        return self.b.vector(x, elliptic_distance(x, self.R))

    def without_drift(self) -> "CoefficientField":
        return CoefficientField(self.a, ZeroDrift(), self.nu, self.modulus, self.R)

    def validate(self, points) -> None:
        """Check ellipticity and the declared modulus at sample points.

        Raises
        ------
        InvariantViolation
            Naming ``"ellipticity"`` or ``"modulus"``.
        """
        pts = np.asarray(points, dtype=float).reshape(-1, np.shape(points)[-1])
        tol = 1e-12
        if self.isotropic:
            g = self.scalar(pts)
            lo, hi = float(g.min()), float(g.max())
        else:
            ev = np.linalg.eigvalsh(self.a.array)
            lo, hi = float(ev.min()), float(ev.max())
        if lo < self.nu - tol or hi > 1.0 / self.nu + tol:
            raise InvariantViolation(
                "ellipticity", f"eigenvalues in [{lo:.6g}, {hi:.6g}] not within [nu, 1/nu] for nu = {self.nu}")
        if self.modulus is None or not self.isotropic:
            return
        g = self.scalar(pts)
        m = len(pts)
        step = max(1, m // 400)
        sub, gs = pts[::step], g[::step]
        dist = np.linalg.norm(sub[:, None, :] - sub[None, :, :], axis=-1)
        diff = np.abs(gs[:, None] - gs[None, :])
        bound = self.modulus(np.minimum(dist, 1.0))
        bad = diff > bound + tol
        if np.any(bad):
            k = np.argmax(diff - bound)
            raise InvariantViolation(
                "modulus", f"|a(x)-a(y)| = {diff.flat[k]:.3g} exceeds sigma(|x-y|) = {bound.flat[k]:.3g}")


# --------------------------------------------------------------------------
# problems and fields


@dataclass(frozen=True)
class AnnulusProblem:
    rho: float
    coeffs: CoefficientField = field(default_factory=CoefficientField)
    n: int = 2
    mesh: tuple = (64, 96)  # (radial cells, angular cells)
    inner: float = 1.0
    outer: float = 0.0
    upwind: bool = True

    def __post_init__(self):
        if not self.rho > 0:
            raise DomainError("annulus radius must be positive")
        if self.n not in (2, 3):
            raise DomainError(f"annulus supports n in (2, 3), got {self.n}")
        nr, nt = self.mesh
        if nr < 3 or nt < 4:
            raise DomainError(f"mesh {self.mesh} too coarse")
        if self.n == 3 and not self.coeffs.isotropic:
            raise DomainError("the axisymmetric three-dimensional solver needs isotropic coefficients")


@dataclass(frozen=True)
class CylinderProblem:
    rho: float
    coeffs: CoefficientField = field(default_factory=CoefficientField)
    n: int = 2
    mesh: tuple = (32, 64, 64)  # (radial cells, angular cells, time steps); n = 1 ignores the angular entry
    scheme: str = "cn"
    initial: Callable | None = None  # None -> cutoff profile phi((x - x^rho)/rho)
    keep_history: bool = False
    upwind: bool = True

    def __post_init__(self):
        if not self.rho > 0:
            raise DomainError("cylinder radius must be positive")
        if self.n not in (1, 2):
            raise DomainError(f"cylinder supports spatial n in (1, 2), got {self.n}")
        if self.scheme not in ("cn", "be"):
            raise DomainError("scheme must be 'cn' (Crank-Nicolson) or 'be' (backward Euler)")
        if self.n == 2 and self.mesh[1] % 2:
            raise DomainError("angular cell count must be even on the disc")

    @property
    def dt(self):
        return self.rho**2 / self.mesh[2]


@dataclass
class DiscreteField:
    """Nodal solution with mesh metadata.

    ``values`` has shape ``(len(r), len(theta))`` and includes boundary
    nodes; for cylinders it is the final time slice and ``history`` (if
    kept) stacks all slices.
    """

    kind: str  # "annulus2" | "annulus3" | "disc" | "interval"
    rho: float
    r: np.ndarray
    theta: np.ndarray
    values: np.ndarray
    residual: float
    times: np.ndarray | None = None
    history: np.ndarray | None = None
    extrema: np.ndarray | None = None  # (steps+1, 2) min/max per time slice

    def points(self) -> np.ndarray:
        return node_points(self.kind, self.rho, self.r, self.theta)

    def gradient(self) -> np.ndarray:
        """Cartesian gradient at interior nodes, shape ``(..., n)``."""
        D = gradient_operator(self.kind, self.rho, self.r, self.theta)
        u = self.values.ravel()
        return np.stack([Dk @ u for Dk in D], axis=-1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if self.times is None:
                w.writerow(["r", "theta", "value"])
                for i, r in enumerate(self.r):
                    for j, th in enumerate(self.theta):
                        w.writerow([repr(float(r)), repr(float(th)), repr(float(self.values[i, j]))])
            else:
                w.writerow(["r", "theta", "t", "value"])
                slices = self.history if self.history is not None else self.values[None]
                times = self.times if self.history is not None else self.times[-1:]
                for k, t in enumerate(times):
                    for i, r in enumerate(self.r):
                        for j, th in enumerate(self.theta):
                            w.writerow([repr(float(r)), repr(float(th)), repr(float(t)),
                                        repr(float(slices[k, i, j]))])


def cutoff_phi(x):
    """Radial quintic cutoff: 1 for ``|x| <= 1/2``, 0 for ``|x| >= 3/4``, C^2 in between.

    ``x`` is a scalar (read as ``|x|``) or an array of points with the
    coordinates in the last axis.
    """
    x = np.asarray(x, dtype=float)
    rad = np.abs(x) if x.ndim == 0 else np.linalg.norm(x, axis=-1)
    u = np.clip((rad - 0.5) / 0.25, 0.0, 1.0)
    out = 1.0 - u**3 * (10.0 - 15.0 * u + 6.0 * u * u)
    return out[()] if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# geometry of the grids


def _annulus_grid(rho, n, mesh):
    nr, nt = mesh
    r = rho / 2 + np.arange(nr + 1) * (rho / 2) / nr
    if n == 2:
        th = -0.5 * math.pi + 2 * math.pi * np.arange(nt) / nt
    else:
        th = math.pi * np.arange(nt + 1) / nt
    return r, th


def node_points(kind, rho, r, theta):
    R, T = np.meshgrid(r, theta, indexing="ij")
    if kind in ("annulus2", "disc"):
        return np.stack([R * np.cos(T), rho + R * np.sin(T)], axis=-1)
    if kind == "annulus3":
        return np.stack([R * np.sin(T), np.zeros_like(R), rho - R * np.cos(T)], axis=-1)
    if kind == "interval":
        return r[:, None, None] * np.ones((1, len(theta), 1))
    raise GeometryError(f"unknown mesh kind {kind!r}")


def _unit_vectors(kind, theta):
    if kind in ("annulus2", "disc"):
        er = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        et = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
    else:
        er = np.stack([np.sin(theta), 0 * theta, -np.cos(theta)], axis=-1)
        et = np.stack([np.cos(theta), 0 * theta, np.sin(theta)], axis=-1)
    return er, et


class _Builder:
    """COO accumulator for an operator over all nodes of a structured grid."""

    def __init__(self, shape):
        self.shape = shape
        self.rows, self.cols, self.vals = [], [], []

    def idx(self, i, j):
        return np.ravel_multi_index((i, j), self.shape)

    def add(self, row, col, val):
        row, col, val = np.broadcast_arrays(row, col, val)
        self.rows.append(row.ravel())
        self.cols.append(col.ravel())
        self.vals.append(val.ravel().astype(float))

    def matrix(self):
        N = self.shape[0] * self.shape[1]
        if not self.rows:
            return sp.csr_matrix((N, N))
        return sp.csr_matrix((np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
                             shape=(N, N))


def _face_flux(B, L, Rn, terms, active_rows):
    """Add a face flux ``F = sum c_m u_m`` (gradient flux through the face, oriented L -> R).

    The divergence-form operator contributes ``-F`` to cell ``L`` and ``+F``
    to cell ``R``; only rows flagged active are kept.
    """
    aL, aR = active_rows
    for node, coeff in terms:
        node, coeff = np.broadcast_arrays(node, coeff)
        B.add(L[aL], node[aL], -coeff[aL])
        B.add(Rn[aR], node[aR], coeff[aR])


def _drift_rows(B, rows, V, bdir, scale, plus, minus, h, diff, upwind):
    """Add ``V * bdir * scale * d/dxi u`` to ``rows`` using neighbours ``plus``/``minus`` at spacing ``h``."""
    coef = V * bdir * scale
    pe = np.abs(bdir * scale) * h / np.maximum(diff, 1e-300) if upwind else np.zeros_like(coef)
    central = pe <= PECLET_LIMIT
    c = np.where(central, coef / (2 * h), 0.0)
    B.add(rows, plus, c)
    B.add(rows, minus, -c)
    up = ~central
    fwd = up & (coef < 0)
    bwd = up & (coef > 0)
    u = coef / h
    B.add(rows, rows, np.where(bwd, u, 0.0) - np.where(fwd, u, 0.0))
    B.add(rows, minus, np.where(bwd, -u, 0.0))
    B.add(rows, plus, np.where(fwd, u, 0.0))


def assemble_annulus(problem: AnnulusProblem, with_drift=True):
    """Assemble the full-grid operator, node volumes and the grid.

    Returns ``(K, V, r, theta, kind)`` where ``K`` acts on all nodes
    (rows of boundary nodes are empty).
    """
    rho, n = problem.rho, problem.n
    nr, nt = problem.mesh
    r, th = _annulus_grid(rho, n, problem.mesh)
    h = r[1] - r[0]
    kind = f"annulus{n}"
    coeffs = problem.coeffs
    drift = with_drift and not coeffs.b.is_zero
    if n == 2:
        return _assemble_polar2(rho, r, th, h, coeffs, drift, problem.upwind, interior_range=(1, nr)) + (r, th, kind)
    return _assemble_axisym3(rho, r, th, h, coeffs, drift, problem.upwind) + (r, th, kind)


def _tensor_polar(coeffs, x, theta, n=2):
    """Polar components ``(a_rr, a_rt, a_tt)`` of the coefficient matrix at points ``x``."""
    er, et = _unit_vectors("annulus2", theta)
    if coeffs.isotropic:
        g = coeffs.scalar(x)
        return g, np.zeros_like(g), g
    A = coeffs.a.array
    arr = np.einsum("...i,ij,...j->...", er, A, er)
    art = np.einsum("...i,ij,...j->...", er, A, et)
    att = np.einsum("...i,ij,...j->...", et, A, et)
    shp = np.shape(x)[:-1]
    return np.broadcast_to(arr, shp), np.broadcast_to(art, shp), np.broadcast_to(att, shp)


def _assemble_polar2(rho, r, th, h, coeffs, drift, upwind, interior_range, outer_face=None):
    """Polar finite volumes on rows ``interior_range[0] <= i < interior_range[1]``.

    ``outer_face`` = (radius, boundary distance) adds a Dirichlet-zero face
    beyond the last row (staggered disc grid); otherwise the last row holds
    boundary values.
    """
    nR, nt = len(r), len(th)
    k = 2 * math.pi / nt
    B = _Builder((nR, nt))
    i0, i1 = interior_range
    I, J = np.meshgrid(np.arange(nR), np.arange(nt), indexing="ij")
    act = (I >= i0) & (I < i1)
    jp, jm = (J + 1) % nt, (J - 1) % nt

    def pt(rr, tt):
        return np.stack([rr * np.cos(tt), rho + rr * np.sin(tt)], axis=-1)

    V = np.zeros((nR, nt))
    rlo = np.maximum(r - h / 2, 0.0)
    rhi = r + h / 2
    V[:] = (0.5 * (rhi**2 - rlo**2) * k)[:, None]

    # radial faces between rows i and i+1
    Ir, Jr = I[:-1], J[:-1]
    rf = 0.5 * (r[:-1] + r[1:])[:, None] * np.ones((1, nt))
    tf = th[None, :] * np.ones_like(rf)
    arr, art, _ = _tensor_polar(coeffs, pt(rf, tf), tf)
    L, Rn = B.idx(Ir, Jr), B.idx(Ir + 1, Jr)
    act_face = (act[:-1], act[1:])
    terms = [(Rn, rf * arr * k / h), (L, -rf * arr * k / h)]
    if not coeffs.isotropic:
        c = art * k / (4 * k)
        terms += [(B.idx(Ir, jp[:-1]), c), (B.idx(Ir + 1, jp[:-1]), c),
                  (B.idx(Ir, jm[:-1]), -c), (B.idx(Ir + 1, jm[:-1]), -c)]
    _face_flux(B, L, Rn, terms, act_face)

    if outer_face is not None:
        last = nR - 1
        rf_o = np.full(nt, outer_face)
        arr_o, _, _ = _tensor_polar(coeffs, pt(rf_o, th), th)
        rows = B.idx(np.full(nt, last), np.arange(nt))
        # flux through the outer face toward boundary value 0 at distance h/2
        B.add(rows, rows, rf_o * arr_o * k / (h / 2))

    # angular faces between columns j and j+1
    tfa = (th + k / 2)[None, :] * np.ones((nR, 1))
    rfa = r[:, None] * np.ones((1, nt))
    _, atr, att = _tensor_polar(coeffs, pt(rfa, tfa), tfa)
    L, Rn = B.idx(I, J), B.idx(I, jp)
    terms = [(Rn, att / rfa * (rhi - rlo)[:, None] / k), (L, -att / rfa * (rhi - rlo)[:, None] / k)]
    if not coeffs.isotropic:
        ip = np.minimum(I + 1, nR - 1)
        im = np.maximum(I - 1, 0)
        c = atr * (rhi - rlo)[:, None] / (4 * h)
        terms += [(B.idx(ip, J), c), (B.idx(ip, jp), c), (B.idx(im, J), -c), (B.idx(im, jp), -c)]
    _face_flux(B, L, Rn, terms, (act, act))

    if drift:
        X = pt(rfa, th[None, :] * np.ones((nR, 1)))
        bv = coeffs.drift_vector(X)
        er, et = _unit_vectors("annulus2", th[None, :] * np.ones((nR, 1)))
        br = np.sum(bv * er, axis=-1)
        bt = np.sum(bv * et, axis=-1)
        g_node = _tensor_polar(coeffs, X, th[None, :] * np.ones((nR, 1)))[0]
        Ia, Ja = I[act], J[act]
        rows = B.idx(Ia, Ja)
        Va = V[act]
        if outer_face is None:
            _drift_rows(B, rows, Va, br[act], 1.0, B.idx(Ia + 1, Ja), B.idx(Ia - 1, Ja), h, g_node[act], upwind)
        else:
            _disc_radial_drift(B, Ia, Ja, rows, Va, br[act], h, g_node[act], upwind, nR, nt)
        _drift_rows(B, rows, Va, bt[act], 1.0 / rfa[act], B.idx(Ia, jp[act]), B.idx(Ia, jm[act]),
                    k, g_node[act] / rfa[act] ** 2, upwind)
    return B.matrix(), V


def _disc_radial_drift(B, Ia, Ja, rows, Va, br, h, g, upwind, nR, nt):
    """Radial drift on the staggered disc grid.

    The neighbour of the innermost ring across the centre is the node on
    the opposite ray; the outermost ring sees the zero boundary value at
    distance ``h/2``.
    """
    inner = Ia == 0
    outer = Ia == nR - 1
    opp = (Ja + nt // 2) % nt
    plus = B.idx(np.minimum(Ia + 1, nR - 1), Ja)
    minus = np.where(inner, B.idx(np.zeros_like(Ia), opp), B.idx(np.maximum(Ia - 1, 0), Ja))
    sel = ~outer
    _drift_rows(B, rows[sel], Va[sel], br[sel], 1.0, plus[sel], minus[sel], h, g[sel], upwind)
    if np.any(outer):
        rw, Vo, bo, go = rows[outer], Va[outer], br[outer], g[outer]
        coef = Vo * bo
        pe = np.abs(bo) * h / go if upwind else np.zeros_like(bo)
        central = pe <= PECLET_LIMIT
        mns = B.idx(Ia[outer] - 1, Ja[outer])
        # three-point derivative on nodes r-h, r, r+h/2 (boundary value 0)
        B.add(rw, mns, np.where(central, -coef / (3 * h), 0.0))
        B.add(rw, rw, np.where(central, -coef / h, 0.0))
        bwd = ~central & (coef > 0)
        fwd = ~central & (coef < 0)
        B.add(rw, rw, np.where(bwd, coef / h, 0.0) - np.where(fwd, coef / (h / 2), 0.0))
        B.add(rw, mns, np.where(bwd, -coef / h, 0.0))


def _assemble_axisym3(rho, r, th, h, coeffs, drift, upwind):
    nR, nT = len(r), len(th)
    k = math.pi / (nT - 1)
    B = _Builder((nR, nT))
    I, J = np.meshgrid(np.arange(nR), np.arange(nT), indexing="ij")
    act = (I >= 1) & (I < nR - 1)

    def pt(rr, tt):
        return np.stack([rr * np.sin(tt), np.zeros_like(rr), rho - rr * np.cos(tt)], axis=-1)

    tlo = np.maximum(th - k / 2, 0.0)
    thi = np.minimum(th + k / 2, math.pi)
    band = np.cos(tlo) - np.cos(thi)  # integral of sin over the cell
    rlo, rhi = r - h / 2, r + h / 2
    V = ((rhi**3 - rlo**3) / 3.0)[:, None] * band[None, :]

    # radial faces
    rf = 0.5 * (r[:-1] + r[1:])[:, None] * np.ones((1, nT))
    tf = th[None, :] * np.ones_like(rf)
    g = coeffs.scalar(pt(rf, tf))
    c = g * rf**2 * band[None, :] / h
    L, Rn = B.idx(I[:-1], J[:-1]), B.idx(I[:-1] + 1, J[:-1])
    _face_flux(B, L, Rn, [(Rn, c), (L, -c)], (act[:-1], act[1:]))

    # polar-angle faces between j and j+1
    tfa = 0.5 * (th[:-1] + th[1:])[None, :] * np.ones((nR, 1))
    rfa = r[:, None] * np.ones((1, nT - 1))
    g = coeffs.scalar(pt(rfa, tfa))
    # face area sin(theta) * int r dr, gradient (u_{j+1}-u_j)/(r k)
    c = g * np.sin(tfa) * (0.5 * (rhi**2 - rlo**2))[:, None] / (rfa * k)
    L, Rn = B.idx(I[:, :-1], J[:, :-1]), B.idx(I[:, 1:], J[:, 1:])
    _face_flux(B, L, Rn, [(Rn, c), (L, -c)], (act[:, :-1], act[:, 1:]))

    if drift:
        T = th[None, :] * np.ones((nR, 1))
        X = pt(r[:, None] * np.ones((1, nT)), T)
        bv = coeffs.drift_vector(X)
        er, et = _unit_vectors("annulus3", T)
        br = np.sum(bv * er, axis=-1)
        bt = np.sum(bv * et, axis=-1)
        gn = coeffs.scalar(X)
        Ia, Ja = I[act], J[act]
        rows = B.idx(Ia, Ja)
        _drift_rows(B, rows, V[act], br[act], 1.0, B.idx(Ia + 1, Ja), B.idx(Ia - 1, Ja), h, gn[act], upwind)
        interior_t = (Ja > 0) & (Ja < nT - 1)
        Ib, Jb = Ia[interior_t], Ja[interior_t]
        rr = r[Ib]
        _drift_rows(B, rows[interior_t], V[act][interior_t], bt[act][interior_t], 1.0 / rr,
                    B.idx(Ib, Jb + 1), B.idx(Ib, Jb - 1), k, gn[act][interior_t] / rr**2, upwind)
    return B.matrix(), V


# --------------------------------------------------------------------------
# linear algebra


def _solve_checked(A, f, lu=None):
    lu = lu if lu is not None else splu(A.tocsc())
    u = lu.solve(f)
    nf = np.linalg.norm(f)
    res = np.linalg.norm(A @ u - f) / (nf if nf > 0 else 1.0)
    if res > RESIDUAL_TOL:
        u = u + lu.solve(f - A @ u)
        res = np.linalg.norm(A @ u - f) / (nf if nf > 0 else 1.0)
    if not res <= RESIDUAL_TOL:
        raise ConvergenceError(f"relative residual {res:.3e} above {RESIDUAL_TOL}", res)
    return u, res


def _interior_split(shape, interior_mask):
    idx = np.flatnonzero(interior_mask.ravel())
    bnd = np.flatnonzero(~interior_mask.ravel())
    return idx, bnd


def _validate_on_grid(coeffs, pts):
    coeffs.validate(pts.reshape(-1, pts.shape[-1]))


# --------------------------------------------------------------------------
# elliptic


def solve_annulus(problem: AnnulusProblem, validate: bool = True) -> DiscreteField:
    """Solve the annulus Dirichlet problem with data ``inner`` / ``outer``.

    Raises
    ------
    InvariantViolation
        If the coefficients fail their ellipticity or modulus check.
    ConvergenceError
        If the relative residual exceeds ``1e-10``.
    """
    K, V, r, th, kind = assemble_annulus(problem)
    if validate:
        _validate_on_grid(problem.coeffs, node_points(kind, problem.rho, r, th))
    nR, nT = len(r), len(th)
    mask = np.zeros((nR, nT), dtype=bool)
    mask[1:-1] = True
    ii, bb = _interior_split((nR, nT), mask)
    ub = np.zeros((nR, nT))
    ub[0] = problem.inner
    ub[-1] = problem.outer
    ub = ub.ravel()
    A = K[ii][:, ii]
    f = -(K[ii][:, bb] @ ub[bb])
    u_int, res = _solve_checked(A, f)
    u = ub.copy()
    u[ii] = u_int
    return DiscreteField(kind, problem.rho, r, th, u.reshape(nR, nT), res)


def discrete_green_column(problem: AnnulusProblem, source) -> DiscreteField:
    """Discrete Green function of the drift-free operator with pole at node ``source = (i, j)``.

    Solves ``K G = e_source`` with zero boundary data, where ``K`` is the
    volume-integrated operator, so that ``G`` approximates the continuous
    Green function and ``G(x, y) = G(y, x)`` when ``b = 0``.
    """
    i, j = source
    nr = problem.mesh[0]
    K, V, r, th, kind = assemble_annulus(problem, with_drift=False)
    nR, nT = len(r), len(th)
    if not (1 <= i <= nr - 1 and 0 <= j < nT):
        raise DomainError(f"source {source} is not an interior node")
    mask = np.zeros((nR, nT), dtype=bool)
    mask[1:-1] = True
    ii, _ = _interior_split((nR, nT), mask)
    A = K[ii][:, ii]
    f = np.zeros(len(ii))
    f[np.searchsorted(ii, i * nT + j)] = 1.0
    g, res = _solve_checked(A, f)
    u = np.zeros(nR * nT)
    u[ii] = g
    return DiscreteField(kind, problem.rho, r, th, u.reshape(nR, nT), res)


def gradient_operator(kind, rho, r, theta):
    """Sparse operators giving Cartesian gradient components at every node.

    Radial derivatives are central in the interior and second-order
    one-sided on the first/last row; angular derivatives are central
    (periodic in two dimensions, zero at the poles of the axisymmetric grid).
    """
    nR, nT = len(r), len(theta)
    I, J = np.meshgrid(np.arange(nR), np.arange(nT), indexing="ij")
    Br = _Builder((nR, nT))
    Bt = _Builder((nR, nT))
    rows = Br.idx(I, J)
    if kind == "disc":
        h = r[1] - r[0]
        opp = (J + nT // 2) % nT
        inner, outer = I == 0, I == nR - 1
        mid = ~(inner | outer)
        Br.add(rows[mid], Br.idx(I[mid] + 1, J[mid]), 1 / (2 * h))
        Br.add(rows[mid], Br.idx(I[mid] - 1, J[mid]), -1 / (2 * h))
        Br.add(rows[inner], Br.idx(I[inner] + 1, J[inner]), 1 / (2 * h))
        Br.add(rows[inner], Br.idx(I[inner], opp[inner]), -1 / (2 * h))
        Br.add(rows[outer], Br.idx(I[outer] - 1, J[outer]), -1 / (3 * h))
        Br.add(rows[outer], rows[outer], -1 / h)
    else:
        h = r[1] - r[0]
        mid = (I > 0) & (I < nR - 1)
        Br.add(rows[mid], Br.idx(I[mid] + 1, J[mid]), 1 / (2 * h))
        Br.add(rows[mid], Br.idx(I[mid] - 1, J[mid]), -1 / (2 * h))
        first, last = I == 0, I == nR - 1
        for sel, s in ((first, 1), (last, -1)):
            Br.add(rows[sel], rows[sel], -1.5 * s / h)
            Br.add(rows[sel], Br.idx(I[sel] + s, J[sel]), 2.0 * s / h)
            Br.add(rows[sel], Br.idx(I[sel] + 2 * s, J[sel]), -0.5 * s / h)
    if kind in ("annulus2", "disc"):
        k = 2 * math.pi / nT
        Bt.add(rows, Bt.idx(I, (J + 1) % nT), 1 / (2 * k * r[I]))
        Bt.add(rows, Bt.idx(I, (J - 1) % nT), -1 / (2 * k * r[I]))
    elif kind == "annulus3":
        k = math.pi / (nT - 1)
        sel = (J > 0) & (J < nT - 1)
        Bt.add(rows[sel], Bt.idx(I[sel], J[sel] + 1), 1 / (2 * k * r[I[sel]]))
        Bt.add(rows[sel], Bt.idx(I[sel], J[sel] - 1), -1 / (2 * k * r[I[sel]]))
    else:
        raise GeometryError(f"no gradient operator for mesh kind {kind!r}")
    Dr, Dt = Br.matrix(), Bt.matrix()
    er, et = _unit_vectors(kind, np.broadcast_to(theta[None, :], (nR, nT)))
    n = er.shape[-1]
    out = []
    for c in range(n):
        if kind == "annulus3" and c == 1:
            continue
        out.append(sp.diags(er[..., c].ravel()) @ Dr + sp.diags(et[..., c].ravel()) @ Dt)
    return out


def normal_derivative_origin(field: DiscreteField, rho: float | None = None) -> float:
    """``D_n v(0)``: derivative along ``+e_n`` at the boundary node at the origin.

    Uses a second-order one-sided stencil in the radial direction (the
    inward normal there is ``-e_r``).

    Raises
    ------
    GeometryError
        If the mesh has no boundary node at the origin.
    """
    rho = field.rho if rho is None else rho
    v = field.values
    if field.kind == "interval":
        if abs(field.r[0]) > 1e-14 * rho:
            raise GeometryError("interval mesh does not start at the origin")
        h = field.r[1] - field.r[0]
        return float((-3 * v[0, 0] + 4 * v[1, 0] - v[2, 0]) / (2 * h))
    if field.kind in ("annulus2", "annulus3"):
        origin_theta = -0.5 * math.pi if field.kind == "annulus2" else 0.0
        if abs(field.r[-1] - rho) > 1e-12 * rho or abs(field.theta[0] - origin_theta) > 1e-12:
            raise GeometryError("mesh has no boundary node at the origin")
        h = field.r[-1] - field.r[-2]
        return float((4 * v[-2, 0] - v[-3, 0] - 3 * v[-1, 0]) / (2 * h))
    if field.kind == "disc":
        if abs(field.theta[0] + 0.5 * math.pi) > 1e-12:
            raise GeometryError("mesh has no ray through the origin")
        h = field.r[1] - field.r[0]
        # nodes at rho (boundary value 0), rho - h/2, rho - 3h/2
        dr = (8.0 / 3.0 * 0.0 - 3.0 * v[-1, 0] + v[-2, 0] / 3.0) / h
        return float(-dr)
    raise GeometryError(f"unknown mesh kind {field.kind!r}")


# --------------------------------------------------------------------------
# parabolic


def _disc_grid(rho, mesh):
    nr, nt = mesh[0], mesh[1]
    h = rho / nr
    r = (np.arange(nr) + 0.5) * h
    th = -0.5 * math.pi + 2 * math.pi * np.arange(nt) / nt
    return r, th, h


def assemble_cylinder(problem: CylinderProblem):
    """Spatial operator ``K`` (volume-integrated), node volumes and grid."""
    rho, coeffs = problem.rho, problem.coeffs
    drift = not coeffs.b.is_zero
    if problem.n == 2:
        r, th, h = _disc_grid(rho, problem.mesh)
        K, V = _assemble_polar2(rho, r, th, h, coeffs, drift, problem.upwind,
                                interior_range=(0, len(r)), outer_face=rho)
        return K, V, r, th, "disc"
    nx = problem.mesh[0]
    x = np.linspace(0.0, 2 * rho, nx + 1)
    h = x[1] - x[0]
    B = _Builder((nx + 1, 1))
    I = np.arange(nx + 1)
    act = (I >= 1) & (I < nx)
    xf = 0.5 * (x[:-1] + x[1:])
    g = coeffs.scalar(xf[:, None]) if coeffs.isotropic else np.full(nx, coeffs.a.array[0, 0])
    L, Rn = I[:-1], I[1:]
    c = g / h
    _face_flux(B, L, Rn, [(Rn, c), (L, -c)], (act[:-1], act[1:]))
    V = np.full((nx + 1, 1), h)
    if drift:
        bv = coeffs.drift_vector(x[:, None])[:, 0]
        gn = coeffs.scalar(x[:, None]) if coeffs.isotropic else np.full(nx + 1, coeffs.a.array[0, 0])
        Ia = I[act]
        _drift_rows(B, Ia, V[act, 0], bv[act], 1.0, Ia + 1, Ia - 1, h, gn[act], problem.upwind)
    return B.matrix(), V, x, np.zeros(1), "interval"


def solve_cylinder(problem: CylinderProblem, validate: bool = True) -> DiscreteField:
    """March ``u_t + L u = 0`` from ``t = -rho^2`` to ``t = 0`` with zero lateral data.

    Crank-Nicolson by default; ``scheme="be"`` selects backward Euler,
    which is monotone for every step size.  Crank-Nicolson keeps the
    discrete maximum principle only for at least
    :func:`monotone_time_steps` steps; coarser runs may undershoot
    slightly near the parabolic boundary.
    """
    K, V, r, th, kind = assemble_cylinder(problem)
    pts = node_points(kind, problem.rho, r, th)
    if validate:
        _validate_on_grid(problem.coeffs, pts)
    shape = (len(r), len(th))
    mask = np.ones(shape, dtype=bool)
    if kind == "interval":
        mask[0] = mask[-1] = False
    ii, _ = _interior_split(shape, mask)
    Kii = K[ii][:, ii].tocsc()
    M = sp.diags(V.ravel()[ii])
    dt = problem.dt
    theta_w = 0.5 if problem.scheme == "cn" else 1.0
    lhs = (M + theta_w * dt * Kii).tocsc()
    rhs_op = (M - (1 - theta_w) * dt * Kii).tocsr()
    lu = splu(lhs)

    if problem.initial is None:
        rel = pts.copy()
        rel[..., -1] -= problem.rho
        u0 = cutoff_phi(rel / problem.rho)
    else:
        u0 = np.asarray(problem.initial(pts), dtype=float).reshape(shape)
    u0 = np.where(mask, u0, 0.0)
    u = u0.ravel()[ii].copy()
    nsteps = problem.mesh[2]
    extrema = np.empty((nsteps + 1, 2))
    full = np.zeros(shape[0] * shape[1])
    full[ii] = u
    extrema[0] = full.min(), full.max()
    hist = [u0.copy()] if problem.keep_history else None
    worst = 0.0
    for s in range(nsteps):
        u, res = _solve_checked(lhs, rhs_op @ u, lu)
        worst = max(worst, res)
        full = np.zeros(shape[0] * shape[1])
        full[ii] = u
        extrema[s + 1] = full.min(), full.max()
        if hist is not None:
            hist.append(full.reshape(shape).copy())
    times = -problem.rho**2 + dt * np.arange(nsteps + 1)
    times[-1] = 0.0
    return DiscreteField(kind, problem.rho, r, th, full.reshape(shape), worst, times,
                         np.asarray(hist) if hist is not None else None, extrema)


def monotone_time_steps(problem: CylinderProblem) -> int:
    """Fewest time steps for which the scheme is provably monotone.

    With ``K`` an M-matrix, Crank-Nicolson maps nonnegative data to
    nonnegative data when the explicit half ``M - dt/2 K`` has a
    nonnegative diagonal, i.e. ``dt <= 2 V_i / K_ii``.  Backward Euler
    needs no restriction and returns 1.
    """
    if problem.scheme == "be":
        return 1
    K, V, r, th, kind = assemble_cylinder(problem)
    shape = (len(r), len(th))
    mask = np.ones(shape, dtype=bool)
    if kind == "interval":
        mask[0] = mask[-1] = False
    ii = np.flatnonzero(mask.ravel())
    diag = K.diagonal()[ii]
    worst = float(np.max(diag / (2.0 * V.ravel()[ii])))
    return max(1, math.ceil(problem.rho**2 * worst * (1 - 1e-12)))
