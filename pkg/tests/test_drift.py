import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hopflab.drift import (ConstantDrift, Drift, GammaParameter, LnBoundedDrift, NearBoundaryDrift, ZeroDrift,
                           check_sufficiency, drift_from_dict, elliptic_base_points, local_ln_norm, omega,
                           omega_at, omega_parabolic, omega_parabolic_at, parabolic_base_points, phi_k)
from hopflab.errors import DivergenceError, DomainError, UnsupportedFamilyError
from hopflab.geometry import DomainModel
from hopflab.modulus import LogPower, Power

E2 = DomainModel("elliptic", 2, 1.0)
E3 = DomainModel("elliptic", 3, 1.0)
P1 = DomainModel("parabolic", 1, 1.0)
P2 = DomainModel("parabolic", 2, 1.0)
NB = NearBoundaryDrift(1.0, Power(0.5))

# Oracle values below come from scipy.integrate.dblquad applied directly to the
# defining integral in polar coordinates about the base point (computed once).
DBLQUAD_ORACLES = [
    (ConstantDrift((0.0, 1.0)), (0.1, 0.05), 0.2, 0.477181637225237),
    (NB, (0.0, 0.5), 0.25, 1.8773323003259281),
    (NB, (0.2, 0.1), 0.3, 2.2891621818449894),
]


@pytest.mark.parametrize("b,x,r,expected", DBLQUAD_ORACLES)
def test_omega_at_matches_dblquad(b, x, r, expected):
    assert omega_at(b, E2, np.array(x), r) == pytest.approx(expected, rel=1e-7)


def test_omega_unweighted_interior_closed_forms():
    # |b| = 1 on a ball well inside: int_{B_r} |x-y|^(1-n) dy = |S^(n-1)| r
    assert omega_at(ConstantDrift((0.0, 1.0)), E2, np.array([0.0, 0.5]), 0.2, weighted=False) == \
        pytest.approx(2 * math.pi * 0.2, rel=1e-12)
    assert omega_at(ConstantDrift((0.0, 0.0, 1.0)), E3, np.array([0.0, 0.0, 0.5]), 0.2, weighted=False) == \
        pytest.approx(4 * math.pi * 0.2, rel=1e-12)


def test_parabolic_functional_matches_erf_oracles():
    # int_0^{r^2} ds int_{|z|<r} exp(-|z|^2/s) s^(-(n+1)/2) dz reduces to a 1-D
    # erf / exponential integral; values from scipy quad at r = 0.1.
    r = 0.1
    one = omega_parabolic_at(ConstantDrift((1.0,)), P1, [0.5, -0.3], r, 1.0, "minus", weighted=False)
    two = omega_parabolic_at(ConstantDrift((0.0, 1.0)), P2, [0.0, 0.5, -0.3], r, 1.0, "minus", weighted=False)
    assert one == pytest.approx(0.3426064400040743, rel=1e-9)
    assert two == pytest.approx(0.5723517764592804, rel=1e-8)
    plus = omega_parabolic_at(ConstantDrift((1.0,)), P1, [0.5, -0.3], r, 1.0, "plus", weighted=False)
    assert plus == pytest.approx(one, rel=1e-12)


def test_zero_drift_is_exactly_zero():
    for r in (0.5, 0.1, 0.01):
        assert omega(ZeroDrift(), E2, r) == 0.0
        assert omega_parabolic(ZeroDrift(), P2, r) == 0.0
        assert local_ln_norm(ZeroDrift(), E2, min(r, 1.0)) == 0.0


def test_ln_norm_of_point_singular_field():
    # (sigma(t)/t)^2 t = 1 for Power(1/2): ||b||_{L^2(B_rho(c))} = sqrt(2 pi rho)
    b = LnBoundedDrift(1.0, Power(0.5))
    assert local_ln_norm(b, E2, 0.25) == pytest.approx(math.sqrt(2 * math.pi * 0.25), rel=1e-10)


def test_base_point_samples():
    pts = elliptic_base_points(E2)
    assert pts.shape == (257, 2)
    assert np.all(pts[:, -1] > 0) and np.all(np.linalg.norm(pts, axis=1) < 1)
    assert pts[:, -1].min() == pytest.approx(2.0**-16)
    assert parabolic_base_points(P2).shape == (96, 3)
    assert parabolic_base_points(P1).shape == (32, 2)


def test_phi_k_scaling_and_examples():
    vals = [phi_k(1.0, 0.5, k, 2) * (0.5 / 2**k) ** 0.5 for k in range(7)]
    assert np.ptp(vals) <= 1e-9 * vals[0]
    assert vals[0] == pytest.approx(3.565080702517339, rel=1e-10)
    # only r / 2^k matters
    assert phi_k(1.0, 0.5, 2, 2) == pytest.approx(phi_k(GammaParameter(1.0), 1.0, 3, 2), rel=1e-12)
    with pytest.raises(DomainError):
        phi_k(1.0, 0.5, -1, 2)
    with pytest.raises(DomainError):
        GammaParameter(0.0)


def test_phi_k_matches_direct_quadrature():
    from scipy.integrate import dblquad
    n, g, r, k = 1, 1.0, 0.5, 1
    c, p = g * (n + 1) / n, (n + 1) ** 2 / (2.0 * n)
    rho = r / 2**k

    def f(q, s):  # s = -time, q = |y|, two rays in one dimension
        return 2 * math.exp(-c * q * q / s) * s ** (-p)
    # the shell splits into a late-time slab and an early-time outer ring
    slab = dblquad(f, rho**2 / 4, rho**2, 0, rho, epsabs=0, epsrel=1e-11)[0]
    ring = dblquad(f, 0, rho**2 / 4, rho / 2, rho, epsabs=0, epsrel=1e-11)[0]
    assert phi_k(g, r, k, n) == pytest.approx(slab + ring, rel=1e-8)


def test_near_boundary_functional_tracks_dini_integral():
    rep = check_sufficiency(NB, Power(0.5), E2, [0.25, 0.0625])
    assert rep.rhs_label == "J(r)" and rep.verdict
    ratios = [row["ratio"] for row in rep.rows]
    assert ratios == pytest.approx([2.1467, 2.1467], rel=1e-3)


def test_parabolic_near_boundary_functional():
    rep = check_sufficiency(NB, Power(0.5), P1, [0.25, 0.0625, 0.015625])
    assert rep.rhs_label == "J(r*sqrt2)" and rep.verdict


def test_check_sufficiency_rejects():
    with pytest.raises(DivergenceError):
        check_sufficiency(NB, LogPower(0.5), E2, [0.1])

    class Custom(Drift):
        pass
    with pytest.raises(UnsupportedFamilyError):
        check_sufficiency(Custom(), Power(0.5), E2, [0.1])


def test_check_sufficiency_jobs_independent():
    a = check_sufficiency(NB, Power(0.5), E2, [0.25, 0.125], base_points=elliptic_base_points(E2)[::16])
    b = check_sufficiency(NB, Power(0.5), E2, [0.25, 0.125], base_points=elliptic_base_points(E2)[::16], jobs=2)
    assert a.rows == b.rows


def test_domain_errors():
    with pytest.raises(DomainError):
        omega(NB, E2, 0.0)
    with pytest.raises(DomainError):
        omega(NB, E2, 2.5)
    with pytest.raises(DomainError):
        omega(NB, P2, 0.1)
    with pytest.raises(DomainError):
        omega_parabolic(NB, E2, 0.1)
    with pytest.raises(DomainError):
        omega_parabolic_at(NB, P1, [0.5, -0.1], 0.1, side="sideways")


def test_divergent_drift_detected():
    class Singular(LnBoundedDrift):
        def magnitude(self, y, dist):
            return np.full(np.shape(y)[:-1], np.inf)
    with pytest.raises(DivergenceError):
        omega(Singular(1.0, Power(0.5)), E2, 0.1, base_points=[[0.0, 0.5]])


def test_drift_json_round_trip():
    for b in (ZeroDrift(), ConstantDrift((0.3, -0.4)), NB, LnBoundedDrift(2.0, Power(0.5), (0.1, 0.4))):
        assert drift_from_dict(b.to_dict()) == b
    with pytest.raises(UnsupportedFamilyError):
        drift_from_dict({"family": "vortex"})
    with pytest.raises(DomainError):
        drift_from_dict({"family": "near_boundary"})


def test_drift_vectors():
    b = ConstantDrift((3.0, 4.0))
    assert b.norm == 5.0
    v = b.vector(np.zeros((2, 2)), np.ones(2))
    np.testing.assert_allclose(v, [[3.0, 4.0], [3.0, 4.0]])
    w = NB.vector(np.array([[0.0, 0.25]]), np.array([0.25]))
    np.testing.assert_allclose(w, [[0.0, 2.0]])


# ---------------------------------------------------------------- properties

BASE = [np.array([0.0, 0.5]), np.array([0.2, 0.05]), np.array([-0.3, 2.0**-8])]


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(0.01, 0.5), st.sampled_from(BASE))
def test_omega_linear_in_amplitude(k, r, x):
    a = omega_at(NB, E2, x, r, order=6)
    b = omega_at(NB.scaled(k), E2, x, r, order=6)
    assert b == pytest.approx(k * a, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.01, 0.5), st.floats(0.01, 0.5), st.sampled_from(BASE))
def test_omega_at_monotone_in_radius(r1, r2, x):
    lo, hi = min(r1, r2), max(r1, r2)
    # unweighted: nested balls and a nonnegative integrand
    assert omega_at(NB, E2, x, lo, weighted=False, order=6) <= \
        omega_at(NB, E2, x, hi, weighted=False, order=6) * (1 + 1e-9)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.01, 0.5), st.sampled_from(BASE), st.sampled_from([NB, ConstantDrift((0.0, 1.0))]))
def test_weighted_not_larger_than_unweighted(r, x, b):
    assert omega_at(b, E2, x, r, order=6) <= omega_at(b, E2, x, r, weighted=False, order=6) * (1 + 1e-12)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from([Power(0.3), Power(0.5), Power(1.0), LogPower(2.0)]), st.floats(1e-8, 1.0),
       st.floats(1e-6, 1.0))
def test_weighted_near_boundary_density_bound(sigma, d, rho):
    rho = min(rho, sigma.monotone_limit)
    d = min(d, sigma.monotone_limit)
    b = NearBoundaryDrift(1.0, sigma)
    assert float(b.weighted(d, rho)) <= sigma(rho) / rho * (1 + 1e-12)
