"""
Moduli of continuity and the Dini integral
==========================================

A modulus ``sigma`` controls how fast coefficients may oscillate.  The
barrier argument only works when ``sigma(t)/t`` is integrable at 0 (the
Dini condition).  Here we evaluate three families, their regularised
versions and their Dini integrals.
"""
import numpy as np

from hopflab.modulus import Linear, LogPower, Power, dini_integral, is_dini, smooth_hat

families = [Linear(1.0), Power(0.5), LogPower(0.5), LogPower(2.0)]

# Classification is exact: it follows from the family parameters.
for sigma in families:
    print(f"{sigma!r:28s} Dini: {is_dini(sigma)}")

# The regularised modulus sits between sigma(r) and 2 sigma(r/2).
r = np.geomspace(1e-4, 0.3, 6)
print("\n      r        sigma(r)   smooth_hat   2 sigma(r/2)")
for rr in r:
    s = Power(0.5)
    print(f"{rr:10.2e} {s(rr):11.5f} {smooth_hat(s, rr):12.5f} {2 * s(rr / 2):12.5f}")

# Dini integrals shrink to 0 with the radius; for LogPower(2) the decay is
# only logarithmic, which is what makes such coefficients borderline.
print("\n      s      J[Power(1/2)]   J[LogPower(2)]")
for s in (1.0, 1e-2, 1e-4, 1e-8):
    print(f"{s:8.0e} {dini_integral(Power(0.5), s):15.6f} {dini_integral(LogPower(2.0), s):15.6f}")
