"""Small numeric kernels: golden-section search and the upper incomplete gamma."""

import math

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_min(f, a, b, xtol=1e-12, maxiter=200):
    """Minimise a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(maxiter):
        if abs(b - a) <= xtol * (1.0 + abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    if fc <= fd:
        return c, fc
    return d, fd


def grid_golden_min(f, grid, xtol=1e-12):
    """Coarse scan over ``grid`` followed by golden refinement around the best point.

    Returns ``(x, fx, index)`` where ``index`` is the grid position of the
    coarse minimiser; callers use it to detect boundary optima. Non-finite
    values count as ``+inf``.
    """
    grid = np.asarray(grid, dtype=float)
    vals = np.array([f(x) for x in grid], dtype=float)
    vals[~np.isfinite(vals)] = np.inf
    i = int(np.argmin(vals))
    if not np.isfinite(vals[i]):
        return float("nan"), float("inf"), -1
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    x, fx = golden_min(f, lo, hi, xtol=xtol)
    if not fx <= vals[i]:
        x, fx = grid[i], vals[i]
    return float(x), float(fx), i


def upper_gamma(a, x, tol=1e-15, maxiter=200_000):
    """Non-regularised upper incomplete gamma ``Gamma(a, x)`` for real ``a`` and ``x > 0``.

    Modified Lentz evaluation of the Legendre continued fraction, which
    converges for every real order (including ``a <= 0`` where the
    regularised scipy routine is undefined).
    """
    if x <= 0:
        raise ValueError("upper_gamma requires x > 0")
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b if b != 0 else 1.0 / tiny
    h = d
    for i in range(1, maxiter):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return math.exp(-x + a * math.log(x)) * h
    raise ArithmeticError(f"continued fraction for Gamma({a}, {x}) did not converge")
