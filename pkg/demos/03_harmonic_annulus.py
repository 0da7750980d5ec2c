"""
The barrier on an annulus
=========================

The barrier solves the equation on ``B_rho(x^rho) minus B_{rho/2}(x^rho)``
with data 1 inside and 0 outside, where ``x^rho = rho e_n`` so that the
outer circle touches the boundary at the origin.  For the Laplacian the
solution is ``log(rho/|x - x^rho|)/log 2`` and ``D_n v(0) = 1/(rho log 2)``.
"""
import math

from hopflab.pde import AnnulusProblem, CoefficientField, normal_derivative_origin, solve_annulus

rho = 0.5
exact = 1.0 / (rho * math.log(2.0))
prev = None
print("   mesh        D_n v(0)      error     order")
for N in (32, 64, 128, 256):
    field = solve_annulus(AnnulusProblem(rho, CoefficientField(), 2, (N, N)))
    err = abs(normal_derivative_origin(field) - exact)
    order = "" if prev is None else f"{math.log2(prev / err):.3f}"
    print(f"{N:4d}x{N:<4d} {normal_derivative_origin(field):12.8f} {err:10.2e}   {order}")
    prev = err

# In three dimensions the axisymmetric solver gives D_n v(0) = 1/rho.
f3 = solve_annulus(AnnulusProblem(rho, CoefficientField(), 3, (64, 64)))
print(f"n = 3: {normal_derivative_origin(f3):.6f} (exact {1 / rho})")
