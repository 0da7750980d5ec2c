"""Composite Gauss-Legendre rules with geometric grading."""
from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _gl(m):
    x, w = np.polynomial.legendre.leggauss(m)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def gauss_legendre(m: int):
    """Nodes and weights of the ``m``-point rule on ``[-1, 1]``."""
    return _gl(int(m))


def graded_breaks(a, b, levels, side="left", ratio=0.5):
    """Panel breakpoints on ``[a, b]`` refined geometrically toward ``a``, ``b`` or both."""
    if levels <= 0 or b <= a:
        return np.array([a, b], dtype=float)
    g = ratio ** np.arange(levels, 0, -1)  # ratio^levels, ..., ratio
    if side == "left":
        inner = a + (b - a) * g
        return np.concatenate([[a], inner, [b]])
    if side == "right":
        inner = b - (b - a) * g[::-1]
        return np.concatenate([[a], inner, [b]])
    mid = 0.5 * (a + b)
    left = graded_breaks(a, mid, levels, "left", ratio)
    right = graded_breaks(mid, b, levels, "right", ratio)
    return np.concatenate([left, right[1:]])


def panel_rule(breaks, m):
    """Composite ``m``-point Gauss-Legendre nodes/weights over consecutive breakpoints."""
    x, w = gauss_legendre(m)
    breaks = np.asarray(breaks, dtype=float)
    a, b = breaks[:-1, None], breaks[1:, None]
    half = 0.5 * (b - a)
    nodes = (half * x + 0.5 * (a + b)).ravel()
    weights = (half * w).ravel()
    return nodes, weights


def graded_rule(a, b, m, levels=20, side="left"):
    return panel_rule(graded_breaks(a, b, levels, side), m)
