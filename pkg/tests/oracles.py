"""Independent reference implementations used to cross-check the library.

Each oracle takes a different route from the code under test: brute-force
scans instead of pruned enumeration, adaptive quadrature instead of closed
forms, pseudo-inverses instead of QR or LSQR, and library special functions
instead of hand-written recurrences.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import integrate
from scipy.special import eval_legendre


def box_hyperbolic_cross(d: int, M: int, factor, nonnegative: bool = False, radius: int = 40):
    """Sort every index of a box by (weight, lexicographic) and take the first M.

    The plain rule is ranked by the exact integer ``prod (1 + k_i^2)`` so that
    ties are decided without rounding.
    """
    rng = range(0, radius + 1) if nonnegative else range(-radius, radius + 1)
    rows = []
    for k in itertools.product(rng, repeat=d):
        w = 1.0
        for f in sorted(factor(abs(c)) for c in k):
            w *= f
        key = math.prod(1 + c * c for c in k) if factor is plain_factor else w
        rows.append((key, k, w))
    rows.sort(key=lambda r: (r[0], r[1]))
    chosen = [(w, k) for _, k, w in rows[:M]]
    if max(abs(c) for _, k in chosen for c in k) >= radius:
        raise ValueError("box too small for the oracle")
    return np.array([k for _, k in chosen]), np.array([w for w, _ in chosen])


def star_factor(s: float):
    return lambda t: math.sqrt(1.0 + (2.0 * math.pi * t) ** (2.0 * s))


def pound_factor(s: float):
    return lambda t: (1.0 + 2.0 * math.pi * t) ** s


def plain_factor(t: float) -> float:
    return math.sqrt(1.0 + t * t)


KINK_BREAKS = (0.5 - 1 / math.sqrt(5), 0.5, 0.5 + 1 / math.sqrt(5))


def torus_coefficient(fn, k: int, breaks=KINK_BREAKS) -> float:
    """Real part of ``int_0^1 f(x) exp(-2 pi i k x) dx`` by adaptive quadrature (even functions)."""
    val, _ = integrate.quad(lambda x: fn(x) * math.cos(2.0 * math.pi * k * x), 0.0, 1.0,
                            limit=400, points=list(breaks), epsabs=1e-14)
    return val


def chebyshev_coefficient(fn, h: int) -> float:
    """``int f eta_h`` for the arcsine measure via ``x = cos(pi t)``."""
    scale = 1.0 if h == 0 else math.sqrt(2.0)
    val, _ = integrate.quad(lambda t: fn(math.cos(math.pi * t)) * scale * math.cos(h * math.pi * t), 0.0, 1.0,
                            limit=400, points=[2.0 / 3.0])
    return val


def legendre_normalized(k: int, x: np.ndarray) -> np.ndarray:
    return math.sqrt(2 * k + 1) * eval_legendre(k, x)


def chebyshev_normalized(h: int, x: np.ndarray) -> np.ndarray:
    coef = np.zeros(h + 1)
    coef[h] = 1.0
    val = np.polynomial.chebyshev.chebval(x, coef)
    return val if h == 0 else math.sqrt(2.0) * val


def pinv_cubature(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``conj(L) conj((L^* L)^{-1}) b`` via an explicit inverse of the Gram matrix."""
    G = L.conj().T @ L
    return np.conj(L) @ np.conj(np.linalg.inv(G)) @ b


def lstsq_coefficients(L: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.linalg.lstsq(L, y, rcond=None)[0]


DB2 = np.array([1 + math.sqrt(3), 3 + math.sqrt(3), 3 - math.sqrt(3), 1 - math.sqrt(3)]) / (4 * math.sqrt(2))
"""Closed-form four-tap Daubechies filter."""
