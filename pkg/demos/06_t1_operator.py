"""
The drift correction as a perturbation series
=============================================

The gradient of ``v - z`` solves ``(I + T1) D(v - z) = -T1 Dz`` where
``T1`` integrates the gradient of the drift-free Green function against the
drift.  When its norm is below 1/2 the Neumann series converges and
``|(I + T1)^{-1}| <= 2``.
"""
from hopflab.drift import ConstantDrift, omega
from hopflab.experiments import estimate_T1_norm, neumann_check
from hopflab.geometry import DomainModel
from hopflab.pde import CoefficientField

b = ConstantDrift((0.0, 1.0))
half_disc = DomainModel("elliptic", 2, 1.0)
print("  rho     |T1|     omega(2 rho)   ratio   |(I+T1)^-1|")
for rho in (0.5, 0.25, 0.125):
    t = estimate_T1_norm(rho, b, mesh=(32, 48))
    w = omega(b, half_disc, 2 * rho)
    inv = neumann_check(rho, CoefficientField(b=b))["inverse_norm"]
    print(f"{rho:6.3f} {t:9.5f} {w:12.5f} {t / w:9.4f} {inv:11.4f}")
