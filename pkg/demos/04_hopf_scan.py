"""
Does the boundary point estimate survive shrinking radii?
=========================================================

``c(rho) = rho D_n v(0)`` is scale invariant for the Laplacian.  With
coefficients whose oscillation is controlled by a Dini modulus (plus a
singular but admissible drift) it stays bounded below; with a non-Dini
modulus it keeps drifting downwards as the radius shrinks.
"""
from hopflab.drift import NearBoundaryDrift
from hopflab.experiments import CoefficientFamily, hopf_constant_scan, perturbation_chain
from hopflab.modulus import LogPower, Power

rhos = [0.5, 0.25, 0.125, 0.0625]
families = [
    CoefficientFamily(),
    CoefficientFamily("dini + drift", "perturbed", 0.4, Power(0.5), drift=NearBoundaryDrift(1.0, Power(0.5))),
    CoefficientFamily("non-dini", "perturbed", 0.4, LogPower(0.5)),
]
for fam in families:
    rep = hopf_constant_scan(fam, rhos, mesh=(64, 96), jobs=4)
    print(f"{fam.label:14s}", " ".join(f"{c:.4f}" for c in rep.c_values),
          " strictly decreasing" if rep.strictly_decreasing() else "")

# The chain splits D_n v(0) into the frozen-coefficient barrier and two corrections.
t = perturbation_chain(0.125, families[1])
print(f"\nrho = 0.125: D_n psi = {t.psi_term:.4f}, |D(z - psi)| = {t.z_minus_psi:.4f}, "
      f"|D(v - z)| = {t.v_minus_z:.4f}, D_n v = {t.dnv0:.4f}")
