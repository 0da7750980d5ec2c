"""Numerical experiments around the boundary point estimate.

For a boundary point at the origin and a radius ``rho`` the barrier ``v``
solves the full problem on the annulus ``A_rho`` (data 1 inside, 0
outside).  Its normal derivative is compared with two simpler solutions:
``z`` (same principal part, no drift) and ``psi`` (principal part frozen at
the origin).  Writing

    D_n v(0) >= D_n psi(0) - |D(z - psi)(0)| - |D(v - z)(0)|

the three terms are reported per radius, together with the normalised
constant ``c(rho) = rho * D_n v(0)``.  The same pipeline runs on
space-time cylinders for the parabolic operator.

The drift part of ``v - z`` satisfies ``(I + T1) D(v - z) = -T1 Dz`` where
``T1`` has kernel ``D_x G(x, y) b(y)``; its discrete sup-norm is estimated
by :func:`estimate_T1_norm`.
"""
from __future__ import annotations

import json
import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import splu

from .drift import Drift, ZeroDrift, drift_from_dict
from .errors import DivergenceError, DomainError, HopfLabError
from .modulus import Modulus, Scaled, modulus_from_dict
from .pde import (AnnulusProblem, CoefficientField, ConstantA, CylinderProblem, IdentityA,
                  IsotropicPerturbation, assemble_annulus, gradient_operator, node_points,
                  normal_derivative_origin, solve_annulus, solve_cylinder)

__all__ = [
    "CoefficientFamily",
    "ChainTerms",
    "HopfScanReport",
    "constant_coefficient_lower_bound",
    "perturbation_chain",
    "parabolic_perturbation_chain",
    "hopf_constant_scan",
    "parabolic_hopf_scan",
    "estimate_T1_norm",
    "t1_matrix",
    "neumann_check",
    "family_from_dict",
]

T1_MESH_CAP = (64, 96)
MODULUS_FACTOR = 5.0  # |a(x)-a(y)| <= 5 eps sigma(|x-y|) on A_rho for the perturbed family
SCAN_COLUMNS = ["rho", "dnv0", "c", "psi_term", "z_minus_psi", "v_minus_z", "status"]


# --------------------------------------------------------------------------
# families


@dataclass(frozen=True)
class CoefficientFamily:
    """Coefficients indexed by the barrier radius.

    ``kind`` is ``"identity"``, ``"constant"`` (matrix ``A0``) or
    ``"perturbed"``: ``a = (1 + eps sigma(|x|) h(x)) I`` with ``h`` the
    cosine of the angle about ``x^rho`` (see :class:`IsotropicPerturbation`).
    """

    label: str = "identity"
    kind: str = "identity"
    eps: float = 0.0
    sigma: Modulus | None = None
    A0: tuple | None = None
    drift: Drift = field(default_factory=ZeroDrift)
    nu: float = 0.5

    def __post_init__(self):
        if self.kind not in ("identity", "constant", "perturbed"):
            raise DomainError(f"unknown coefficient family kind {self.kind!r}")
        if self.kind == "perturbed":
            if self.sigma is None:
                raise DomainError("perturbed family needs a modulus")
            if not 0 < self.eps < 1 - self.nu:
                raise DomainError(f"perturbation amplitude must lie in (0, 1 - nu), got {self.eps}")
        if self.kind == "constant" and self.A0 is None:
            raise DomainError("constant family needs a matrix A0")

    def field(self, rho: float, with_drift: bool = True) -> CoefficientField:
        b = self.drift if with_drift else ZeroDrift()
        if self.kind == "identity":
            return CoefficientField(IdentityA(), b, self.nu)
        if self.kind == "constant":
            return CoefficientField(ConstantA(self.A0), b, self.nu)
        a = IsotropicPerturbation(self.eps, self.sigma, rho)
        return CoefficientField(a, b, self.nu, Scaled(MODULUS_FACTOR * self.eps, self.sigma))

    def frozen(self, rho: float, n: int = 2) -> CoefficientField:
        """Drift-free constant-coefficient operator frozen at the origin."""
        fld = self.field(rho, with_drift=False)
        if self.kind == "constant":
            return CoefficientField(ConstantA(self.A0), ZeroDrift(), self.nu)
        if self.kind == "identity":
            return CoefficientField(IdentityA(), ZeroDrift(), self.nu)
        g0 = float(fld.scalar(np.zeros((1, n)))[0])
        return CoefficientField(ConstantA(g0 * np.eye(n)), ZeroDrift(), self.nu)

    def to_dict(self):
        d = {"label": self.label, "kind": self.kind, "nu": self.nu, "drift": self.drift.to_dict()}
        if self.kind == "perturbed":
            d.update(eps=self.eps, sigma=self.sigma.to_dict())
        if self.kind == "constant":
            d["A0"] = [list(r) for r in self.A0]
        return d


def family_from_dict(d: dict) -> CoefficientFamily:
    try:
        sigma = modulus_from_dict(d["sigma"]) if "sigma" in d else None
        A0 = tuple(tuple(float(v) for v in row) for row in d["A0"]) if "A0" in d else None
        drift = drift_from_dict(d.get("drift", {"family": "zero"}))
        return CoefficientFamily(d.get("label", d.get("kind", "identity")), d.get("kind", "identity"),
                                 float(d.get("eps", 0.0)), sigma, A0, drift, float(d.get("nu", 0.5)))
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"malformed coefficient family {d!r}") from exc


# --------------------------------------------------------------------------
# elliptic pipeline


def constant_coefficient_lower_bound(rho: float, A0=None, n: int = 2, mesh=(128, 192),
                                     analytic: bool = True) -> float:
    """``D_n psi_0(0)`` for the frozen constant-coefficient barrier.

    For multiples of the identity the barrier is radial and the value is
    ``1/(rho ln 2)`` (``n = 2``) or ``1/rho`` (``n = 3``); pass
    ``analytic=False`` to force a numerical solve.
    """
    A = np.eye(n) if A0 is None else np.asarray(A0, dtype=float)
    if A.shape != (n, n):
        raise DomainError(f"A0 must be {n}x{n}")
    iso = bool(np.all(A == A[0, 0] * np.eye(n)))
    if iso and analytic:
        return 1.0 / (rho * math.log(2.0)) if n == 2 else 1.0 / rho
    ev = np.linalg.eigvalsh(A)
    if not ev.min() > 0:
        raise DomainError("A0 must be positive definite")
    coeffs = CoefficientField(ConstantA(A), ZeroDrift(), nu=min(1.0, float(ev.min()), float(1.0 / ev.max())))
    return normal_derivative_origin(solve_annulus(AnnulusProblem(rho, coeffs, n, mesh)))


@dataclass
class ChainTerms:
    rho: float
    dnv0: float
    psi_term: float
    z_minus_psi: float
    v_minus_z: float

    @property
    def c(self):
        return self.rho * self.dnv0


def _dn_diff(f, g):
    diff = type(f)(f.kind, f.rho, f.r, f.theta, f.values - g.values, 0.0)
    return abs(normal_derivative_origin(diff))


def perturbation_chain(rho: float, family: CoefficientFamily, mesh=(64, 96), n: int = 2) -> ChainTerms:
    """Solve for ``psi``, ``z`` and ``v`` on one mesh and return the chain terms at the origin.

    When the family has no drift ``v`` and ``z`` come from the same linear
    system, so ``v - z`` vanishes identically; for constant coefficients the
    same holds for ``z - psi``.
    """
    fz = family.field(rho, with_drift=False)
    fv = family.field(rho, with_drift=True)
    psi = solve_annulus(AnnulusProblem(rho, family.frozen(rho, n), n, mesh))
    z = solve_annulus(AnnulusProblem(rho, fz, n, mesh))
    v = solve_annulus(AnnulusProblem(rho, fv, n, mesh))
    return ChainTerms(rho, normal_derivative_origin(v), normal_derivative_origin(psi),
                      _dn_diff(z, psi), _dn_diff(v, z))


def parabolic_perturbation_chain(rho: float, family: CoefficientFamily, mesh=(32, 64, 128), n: int = 2,
                                 scheme: str = "cn") -> ChainTerms:
    """Cylinder analogue of :func:`perturbation_chain` (value at ``(0; 0)``)."""
    fz = family.field(rho, with_drift=False)
    fv = family.field(rho, with_drift=True)
    frozen = family.frozen(rho, n)
    psi = solve_cylinder(CylinderProblem(rho, frozen, n, mesh, scheme))
    z = solve_cylinder(CylinderProblem(rho, fz, n, mesh, scheme))
    v = solve_cylinder(CylinderProblem(rho, fv, n, mesh, scheme))
    return ChainTerms(rho, normal_derivative_origin(v), normal_derivative_origin(psi),
                      _dn_diff(z, psi), _dn_diff(v, z))


# --------------------------------------------------------------------------
# scans


@dataclass
class HopfScanReport:
    label: str
    rows: list  # dicts keyed by SCAN_COLUMNS
    mesh: tuple
    kind: str = "elliptic"
    family: dict = field(default_factory=dict)

    @property
    def c_values(self):
        return np.array([r["c"] for r in self.rows if r["status"] == "ok"])

    @property
    def failed(self):
        return [r["rho"] for r in self.rows if r["status"] != "ok"]

    def strictly_decreasing(self) -> bool:
        """Is ``c`` strictly decreasing as ``rho`` decreases along the grid?"""
        c = self.c_values
        return bool(len(c) >= 2 and np.all(np.diff(c) < 0))

    def csv_lines(self) -> list[str]:
        out = [",".join(SCAN_COLUMNS)]
        for r in self.rows:
            out.append(",".join(_fmt(r[k]) for k in SCAN_COLUMNS))
        return out

    def summary(self) -> dict:
        c = self.c_values
        s = {"label": self.label, "kind": self.kind, "mesh": list(self.mesh), "family": self.family,
             "failed_rows": self.failed}
        if len(c):
            s.update(c_min=float(c.min()), c_max=float(c.max()), c_ratio=float(c.max() / c.min()),
                     strictly_decreasing=self.strictly_decreasing())
        return s


def _fmt(v):
    if isinstance(v, str):
        return v
    return repr(float(v))


def _scan_row(args):
    kind, rho, family, mesh, n, scheme = args
    try:
        if kind == "elliptic":
            t = perturbation_chain(rho, family, mesh, n)
        else:
            t = parabolic_perturbation_chain(rho, family, mesh, n, scheme)
        if not math.isfinite(t.dnv0):
            raise DivergenceError("non-finite normal derivative")
        return {"rho": rho, "dnv0": t.dnv0, "c": t.c, "psi_term": t.psi_term,
                "z_minus_psi": t.z_minus_psi, "v_minus_z": t.v_minus_z, "status": "ok"}
    except (HopfLabError, ArithmeticError, ValueError, MemoryError) as exc:
        nan = float("nan")
        return {"rho": rho, "dnv0": nan, "c": nan, "psi_term": nan, "z_minus_psi": nan,
                "v_minus_z": nan, "status": f"failed: {type(exc).__name__}"}


def _run_rows(jobs_args, jobs):
    if jobs <= 1 or len(jobs_args) <= 1:
        return [_scan_row(a) for a in jobs_args]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_scan_row, jobs_args))


def hopf_constant_scan(family: CoefficientFamily, rhos, mesh=(64, 96), n: int = 2,
                       jobs: int = 1, R: float = 1.0) -> HopfScanReport:
    """``c(rho) = rho D_n v(0)`` across radii, with fixed cells per radius.

    Rows are computed independently (in a process pool when ``jobs > 1``)
    and merged in order of decreasing ``rho``; a failed row is marked in
    its ``status`` column and the scan continues.
    """
    rhos = sorted((float(r) for r in rhos), reverse=True)
    for r in rhos:
        if not 0 < r <= R / 2:
            raise DomainError(f"scan radius {r} outside (0, R/2]")
    rows = _run_rows([("elliptic", r, family, tuple(mesh), n, "cn") for r in rhos], jobs)
    return HopfScanReport(family.label, rows, tuple(mesh), "elliptic", family.to_dict())


def parabolic_hopf_scan(family: CoefficientFamily, rhos, mesh=(32, 64, 128), n: int = 2,
                        jobs: int = 1, scheme: str = "cn", R: float = 1.0) -> HopfScanReport:
    """``c_p(rho) = rho D_n v(0; 0)`` on cylinders ``B_rho(x^rho) x (-rho^2, 0)``."""
    if n not in (1, 2):
        raise DomainError("parabolic scan supports spatial n in (1, 2)")
    rhos = sorted((float(r) for r in rhos), reverse=True)
    for r in rhos:
        if not 0 < r <= R / 2:
            raise DomainError(f"scan radius {r} outside (0, R/2]")
    rows = _run_rows([("parabolic", r, family, tuple(mesh), n, scheme) for r in rhos], jobs)
    return HopfScanReport(family.label, rows, tuple(mesh), "parabolic", family.to_dict())


# --------------------------------------------------------------------------
# the operator T1


def _t1_parts(rho, coeffs: CoefficientField, mesh):
    nr, nt = mesh
    if nr > T1_MESH_CAP[0] or nt > T1_MESH_CAP[1]:
        raise DomainError(f"T1 estimation is capped at mesh {T1_MESH_CAP}, got {tuple(mesh)}")
    prob = AnnulusProblem(rho, coeffs.without_drift(), 2, tuple(mesh))
    K, V, r, th, kind = assemble_annulus(prob, with_drift=False)
    nR, nT = len(r), len(th)
    mask = np.zeros((nR, nT), dtype=bool)
    mask[1:-1] = True
    ii = np.flatnonzero(mask.ravel())
    A = K[ii][:, ii].tocsc()
    D = [Dk.tocsr()[ii][:, ii] for Dk in gradient_operator(kind, rho, r, th)]
    pts = node_points(kind, rho, r, th).reshape(-1, 2)[ii]
    bvec = coeffs.drift_vector(pts)
    return A, D, V.ravel()[ii], bvec, ii


def estimate_T1_norm(rho: float, b: Drift, mesh=(32, 48), coeffs: CoefficientField | None = None,
                     chunk: int = 256) -> float:
    """Max-row-sum norm of the discrete ``T1`` on vector fields with the sup norm.

    ``(T1 f)_k(x) = sum_y D_k G(x, y) b(y).f(y) |V_y|`` with ``G`` the
    discrete Green function of the drift-free operator.  Rows of
    ``D_k A^{-1}`` are obtained chunk-wise from transposed solves, so
    the dense matrix is never formed.

    Raises
    ------
    DomainError
        If the mesh exceeds the 64 x 96 cap.
    """
    coeffs = CoefficientField(b=b) if coeffs is None else CoefficientField(coeffs.a, b, coeffs.nu,
                                                                          coeffs.modulus, coeffs.R)
    if b.is_zero:
        _t1_parts(rho, coeffs, mesh)  # still enforce the mesh guard
        return 0.0
    A, D, V, bvec, _ = _t1_parts(rho, coeffs, mesh)
    weight = V * np.abs(bvec).sum(axis=1)
    lu = splu(A)
    N = A.shape[0]
    best = 0.0
    for Dk in D:
        DkT = Dk.T.tocsc()
        for s in range(0, N, chunk):
            cols = DkT[:, s:s + chunk].toarray()
            Y = lu.solve(cols, trans="T")  # column c = row (s + c) of Dk A^{-1}
            best = max(best, float((np.abs(Y).T @ weight).max()))
    return best


def t1_matrix(rho: float, coeffs: CoefficientField, mesh=(16, 24)) -> tuple:
    """Dense ``T1`` (block rows ``k``, block columns ``i``) for small meshes.

    Returns ``(T, D, ii)`` with ``D`` the interior gradient operators.
    """
    A, D, V, bvec, ii = _t1_parts(rho, coeffs, mesh)
    N = A.shape[0]
    if 2 * N > 4000:
        raise DomainError("dense T1 is limited to small meshes")
    Ainv = splu(A).solve(np.eye(N))
    n = len(D)
    T = np.zeros((n * N, n * N))
    for k, Dk in enumerate(D):
        G = Dk @ Ainv
        for i in range(n):
            T[k * N:(k + 1) * N, i * N:(i + 1) * N] = G * (V * bvec[:, i])[None, :]
    return T, D, ii


def neumann_check(rho: float, coeffs: CoefficientField, mesh=(16, 24)) -> dict:
    """Norm of ``T1``, and of ``(I + T1)^{-1}`` when ``||T1|| < 1/2``.

    Returns a dict with ``norm``, ``inverse_norm`` (``nan`` when not
    attempted), ``solved`` and ``bound_ok`` (``inverse_norm <= 2``).
    """
    T, _, _ = t1_matrix(rho, coeffs, mesh)
    norm = float(np.abs(T).sum(axis=1).max())
    out = {"norm": norm, "inverse_norm": float("nan"), "solved": False, "bound_ok": None}
    if norm < 0.5:
        M = np.eye(T.shape[0]) + T
        inv = np.linalg.solve(M, np.eye(T.shape[0]))
        res = np.abs(M @ inv - np.eye(T.shape[0])).max()
        inv_norm = float(np.abs(inv).sum(axis=1).max())
        out.update(inverse_norm=inv_norm, solved=bool(res < 1e-10), bound_ok=bool(inv_norm <= 2.0))
    return out


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()
