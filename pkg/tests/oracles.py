"""Independent reference values used across the test modules.

Nothing here calls into the package.
"""
import math

import numpy as np
from scipy import integrate


def bessel_j0(x, terms=60):
    """Power series of J0."""
    total, term = 0.0, 1.0
    for k in range(terms):
        if k:
            term *= -(x / 2) ** 2 / (k * k)
        total += term
    return total


def bessel_j0_first_zero(lo=2.0, hi=3.0, tol=1e-14):
    flo = bessel_j0(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = bessel_j0(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def twist_constant_rectangle(a, b):
    """C for the centered a x b rectangle from the analytic ground state."""
    norm = 2.0 / math.sqrt(a * b)

    def d1(y1, y2):
        return -norm * math.pi / a * math.sin(math.pi * y1 / a) * math.cos(math.pi * y2 / b)

    def d2(y1, y2):
        return -norm * math.pi / b * math.cos(math.pi * y1 / a) * math.sin(math.pi * y2 / b)

    def f(y2, y1):
        return (-y2 * d1(y1, y2) + y1 * d2(y1, y2)) ** 2

    val, _ = integrate.dblquad(f, -a / 2, a / 2, -b / 2, b / 2, epsabs=1e-13, epsrel=1e-12)
    return val


def direct_fourier(f, period, n, points=4096):
    """nu_n = (1/sqrt L) int_0^L f(s) exp(-2 pi i n s / L) ds by the trapezoid rule."""
    s = np.arange(points) * period / points
    return np.sum(f(s) * np.exp(-2j * np.pi * n * s / period)) * period / points / np.sqrt(period)


def helix(a, b, n, period_turns=1):
    """N+1 arc-length samples of one turn of the helix (a cos ws, a sin ws, b w s)."""
    w = 1.0 / math.hypot(a, b)
    L = 2 * math.pi / w * period_turns
    s = np.linspace(0.0, L, n + 1)
    pts = np.column_stack([a * np.cos(w * s), a * np.sin(w * s), b * w * s])
    return pts, L, a * w * w, b * w * w


def dirichlet_1d_eigenvalues(n, h):
    j = np.arange(1, n + 1)
    return 2 * (1 - np.cos(j * np.pi * h)) / h ** 2
