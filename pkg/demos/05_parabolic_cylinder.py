"""
Heat flow on a cylinder
=======================

The parabolic barrier starts from a cutoff bump centred at ``x^rho`` and
runs the equation for a time ``rho^2`` with zero lateral data.  First a
sanity check against the separable heat solution, then the normalised
derivative at the boundary point for two schemes.
"""
import math

import numpy as np

from hopflab.pde import (CoefficientField, CylinderProblem, monotone_time_steps, normal_derivative_origin,
                         solve_cylinder)

# u(x, t) = exp(-pi^2 t) sin(pi x) on (0, 1): rho = 1/2, 2500 steps of 1e-4.
heat = CylinderProblem(0.5, CoefficientField(), 1, (256, 1, 2500), initial=lambda p: np.sin(math.pi * p[..., 0]))
f = solve_cylinder(heat)
exact = math.exp(-math.pi**2 / 4) * np.sin(math.pi * f.r)
print(f"heat eigenmode: max relative error {np.abs(f.values[:, 0] - exact).max() / exact.max():.2e}")

# Crank-Nicolson is second order but monotone only for small steps;
# backward Euler is monotone for every step.
for scheme in ("cn", "be"):
    prob = CylinderProblem(0.25, CoefficientField(), 2, (16, 32, 128), scheme)
    g = solve_cylinder(prob)
    print(f"{scheme}: c_p = {0.25 * normal_derivative_origin(g):.6f}, "
          f"range [{g.extrema[:, 0].min():.2e}, {g.extrema[:, 1].max():.4f}], "
          f"monotone from {monotone_time_steps(prob)} steps")
