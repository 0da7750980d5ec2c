import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.sparse.linalg import spsolve

from hopflab.drift import ConstantDrift, NearBoundaryDrift, ZeroDrift
from hopflab.errors import DomainError
from hopflab.experiments import (CoefficientFamily, config_hash, constant_coefficient_lower_bound,
                                 estimate_T1_norm, family_from_dict, hopf_constant_scan, neumann_check,
                                 parabolic_hopf_scan, parabolic_perturbation_chain, perturbation_chain,
                                 t1_matrix, _t1_parts)
from hopflab.modulus import LogPower, Power
from hopflab.pde import CoefficientField

INV_LN2 = 1.0 / math.log(2.0)
NB = NearBoundaryDrift(1.0, Power(0.5))
DINI = CoefficientFamily("dini", "perturbed", 0.4, Power(0.5), drift=NB)


def test_lower_bound_analytic_and_numeric_agree():
    for rho in (0.5, 0.125):
        exact = constant_coefficient_lower_bound(rho)
        assert exact == pytest.approx(INV_LN2 / rho)
        assert constant_coefficient_lower_bound(rho, analytic=False) == pytest.approx(exact, rel=1e-4)
    assert constant_coefficient_lower_bound(0.5, n=3) == 2.0
    assert constant_coefficient_lower_bound(0.5, n=3, mesh=(64, 64), analytic=False) == \
        pytest.approx(2.0, rel=1e-3)


def test_lower_bound_anisotropic():
    A0 = ((1.5, 0.3), (0.3, 0.8))
    val = constant_coefficient_lower_bound(0.25, A0, mesh=(64, 96))
    coarse = constant_coefficient_lower_bound(0.25, A0, mesh=(32, 48))
    assert val > 0 and coarse == pytest.approx(val, rel=0.02)
    with pytest.raises(DomainError):
        constant_coefficient_lower_bound(0.25, np.eye(3))
    with pytest.raises(DomainError):
        constant_coefficient_lower_bound(0.25, ((1.0, 0.0), (0.0, -1.0)))


def test_family_validation_and_json():
    with pytest.raises(DomainError):
        CoefficientFamily("x", "perturbed", 0.6, Power(0.5))
    with pytest.raises(DomainError):
        CoefficientFamily("x", "perturbed", 0.2)
    with pytest.raises(DomainError):
        CoefficientFamily("x", "wavy")
    with pytest.raises(DomainError):
        CoefficientFamily("x", "constant")
    with pytest.raises(DomainError):
        family_from_dict({"kind": "perturbed", "eps": "lots", "sigma": {"family": "power", "alpha": 0.5}})
    const = CoefficientFamily("c", "constant", A0=((1.2, 0.1), (0.1, 0.9)))
    for fam in (CoefficientFamily(), DINI, const):
        assert family_from_dict(fam.to_dict()) == fam


def test_family_fields():
    fld = DINI.field(0.25)
    assert fld.modulus.c == pytest.approx(2.0) and fld.b == NB
    assert DINI.field(0.25, with_drift=False).b.is_zero
    frozen = DINI.frozen(0.25)
    np.testing.assert_allclose(frozen.a.array, np.eye(2))
    assert DINI.frozen(0.25, n=1).a.array.shape == (1, 1)


def test_chain_exact_zeros_and_lower_bound():
    t = perturbation_chain(0.25, CoefficientFamily(), (32, 48))
    assert t.v_minus_z == 0.0 and t.z_minus_psi == 0.0 and t.dnv0 == t.psi_term
    d = perturbation_chain(0.25, DINI, (32, 48))
    assert d.v_minus_z > 0 and d.z_minus_psi > 0
    assert d.dnv0 >= d.psi_term - d.z_minus_psi - d.v_minus_z - 1e-12
    assert d.c == pytest.approx(0.25 * d.dnv0)


def test_parabolic_chain():
    t = parabolic_perturbation_chain(0.25, CoefficientFamily(), (8, 16, 32))
    assert t.v_minus_z == 0.0 and t.z_minus_psi == 0.0 and t.dnv0 > 0
    d = parabolic_perturbation_chain(0.25, DINI, (8, 16, 32), n=1)
    assert d.dnv0 >= d.psi_term - d.z_minus_psi - d.v_minus_z - 1e-12


def test_scan_orders_rows_and_reports():
    rep = hopf_constant_scan(CoefficientFamily(), [0.125, 0.5, 0.25], mesh=(32, 48))
    assert [r["rho"] for r in rep.rows] == [0.5, 0.25, 0.125]
    assert np.ptp(rep.c_values) <= 1e-9
    lines = rep.csv_lines()
    assert lines[0] == "rho,dnv0,c,psi_term,z_minus_psi,v_minus_z,status"
    assert lines[1].startswith("0.5,") and lines[1].endswith(",ok")
    s = rep.summary()
    assert s["failed_rows"] == [] and s["c_ratio"] == pytest.approx(1.0)
    assert not rep.strictly_decreasing()


def test_scan_marks_failed_rows_and_continues():
    rep = hopf_constant_scan(CoefficientFamily(), [0.5, 0.25], mesh=(2, 48))
    assert rep.failed == [0.5, 0.25]
    assert all(r["status"].startswith("failed") for r in rep.rows)
    assert len(rep.c_values) == 0 and "c_min" not in rep.summary()


def test_scan_radius_validation():
    with pytest.raises(DomainError):
        hopf_constant_scan(CoefficientFamily(), [0.75])
    with pytest.raises(DomainError):
        parabolic_hopf_scan(CoefficientFamily(), [0.25], n=3)


def test_scan_parallel_rows_match_serial():
    a = hopf_constant_scan(DINI, [0.5, 0.25, 0.125], mesh=(16, 24))
    b = hopf_constant_scan(DINI, [0.5, 0.25, 0.125], mesh=(16, 24), jobs=3)
    assert a.csv_lines() == b.csv_lines()


def test_non_dini_family_constant_drifts_down():
    fam = CoefficientFamily("non-dini", "perturbed", 0.4, LogPower(0.5))
    rep = hopf_constant_scan(fam, [0.5, 0.25, 0.125, 0.0625], mesh=(32, 48))
    assert rep.strictly_decreasing()


def test_parabolic_scan_scale_invariant_for_identity():
    rep = parabolic_hopf_scan(CoefficientFamily(), [0.5, 0.125], mesh=(8, 16, 32))
    c = rep.c_values
    assert c[0] > 0 and c[0] == pytest.approx(c[1], rel=1e-9)


# ------------------------------------------------------------------ T1


def test_t1_mesh_cap_and_zero_drift():
    with pytest.raises(DomainError):
        estimate_T1_norm(0.25, ConstantDrift((0.0, 1.0)), mesh=(128, 96))
    with pytest.raises(DomainError):
        estimate_T1_norm(0.25, ZeroDrift(), mesh=(64, 128))
    assert estimate_T1_norm(0.25, ZeroDrift()) == 0.0


@pytest.mark.parametrize("b", [ConstantDrift((0.0, 1.0)), ConstantDrift((0.6, -0.8)), NB])
def test_t1_chunked_estimate_matches_dense_matrix(b):
    fld = CoefficientField(b=b)
    T, _, _ = t1_matrix(0.25, fld, (12, 16))
    dense = np.abs(T).sum(axis=1).max()
    assert estimate_T1_norm(0.25, b, (12, 16), chunk=7) == pytest.approx(dense, rel=1e-12)


def test_t1_resolvent_identity():
    # w solves (A + V b.D) w = -V b.D z; then (I + T1) Dw = -T1 Dz exactly
    rho, mesh = 0.25, (12, 16)
    b = ConstantDrift((0.3, 1.0))
    fld = CoefficientField(b=b)
    A, D, V, bvec, ii = _t1_parts(rho, fld, mesh)
    rng = np.random.default_rng(5)
    z = rng.standard_normal(A.shape[0])
    B = sum(sp.diags(V * bvec[:, k]) @ D[k] for k in range(len(D)))
    w = spsolve((A + B).tocsc(), -(B @ z))
    T, _, _ = t1_matrix(rho, fld, mesh)
    Dw = np.concatenate([Dk @ w for Dk in D])
    Dz = np.concatenate([Dk @ z for Dk in D])
    resid = Dw + T @ Dw + T @ Dz
    assert np.abs(resid).max() <= 1e-10 * max(1.0, np.abs(Dz).max())


def test_t1_scales_with_radius_like_omega():
    b = ConstantDrift((0.0, 1.0))
    norms = [estimate_T1_norm(r, b, (16, 24)) for r in (0.5, 0.25, 0.125)]
    assert norms[0] > norms[1] > norms[2] > 0


def test_neumann_check():
    small = neumann_check(0.125, CoefficientField(b=ConstantDrift((0.0, 1.0))))
    assert small["norm"] < 0.5 and small["solved"] and small["bound_ok"]
    assert small["inverse_norm"] <= 1 / (1 - small["norm"]) + 1e-9
    big = neumann_check(0.5, CoefficientField(b=ConstantDrift((0.0, 40.0))))
    assert big["norm"] >= 0.5 and not big["solved"] and math.isnan(big["inverse_norm"])
    with pytest.raises(DomainError):
        t1_matrix(0.25, CoefficientField(b=NB), (64, 96))


@settings(max_examples=10, deadline=None)
@given(st.floats(0.05, 20.0), st.sampled_from([0.5, 0.25, 0.125]))
def test_t1_norm_homogeneous_in_drift(k, rho):
    b = ConstantDrift((0.2, 1.0))
    base = estimate_T1_norm(rho, b, (8, 12))
    assert estimate_T1_norm(rho, b.scaled(k), (8, 12)) == pytest.approx(k * base, rel=1e-12)


def test_config_hash_is_key_order_independent():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
