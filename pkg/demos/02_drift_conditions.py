"""
How singular may the drift be?
==============================

A drift blowing up like ``sigma(d)/d`` at the boundary is still admissible
when its distance-weighted potential ``omega(r)`` tends to zero.  We compare
``omega(r)`` with the Dini integral of ``sigma`` across dyadic radii: a
bounded ratio means the sufficient condition captures the right scaling.
"""
import math

from hopflab.drift import NearBoundaryDrift, ZeroDrift, check_sufficiency, omega_parabolic, phi_k
from hopflab.geometry import DomainModel
from hopflab.modulus import Power

sigma = Power(0.5)
drift = NearBoundaryDrift(1.0, sigma)
half_disc = DomainModel("elliptic", 2, 1.0)

# Each radius is independent; jobs=4 spreads them over worker processes.
rep = check_sufficiency(drift, sigma, half_disc, [2.0**-k for k in range(2, 7)], jobs=4)
print(f"bound: omega(r) <= C {rep.rhs_label}")
for r, w, rhs, ratio in rep.csv_rows():
    print(f"r = {r:8.5f}   omega = {w:8.5f}   J = {rhs:8.5f}   ratio = {ratio:.4f}")
print("ratios within a factor 3 of their median:", rep.verdict)

# A vanishing drift contributes nothing at all.
print("zero drift:", check_sufficiency(ZeroDrift(), sigma, half_disc, [0.25]).rows[0]["omega"])

# The parabolic analogue uses a Gaussian kernel over backward cylinders.
cyl = DomainModel("parabolic", 1, 1.0)
for r in (0.25, 0.0625):
    print(f"backward functional at r = {r}: {omega_parabolic(drift, cyl, r):.5f}")

# Gaussian shell integrals scale exactly like (r / 2^k)^(-1/n).
print("Phi_k (r/2^k)^(1/2):", [round(phi_k(1.0, 0.5, k, 2) * math.sqrt(0.5 / 2**k), 6) for k in range(4)])
