"""Orthonormal systems: complex exponentials, Chebyshev cosines, Legendre polynomials.

All evaluators are vectorized over points.  Domains:

* ``fourier``: ``[0, 1)^d`` (points are reduced modulo one), probability measure ``dx``;
* ``chebyshev``: ``[-1, 1]^d`` with the arcsine (Chebyshev) probability measure;
* ``legendre``: ``[-1, 1]`` (univariate only) with the probability measure ``dx / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .index import IndexSet, WeightRule, hyperbolic_cross

__all__ = [
    "BasisFamily",
    "SpectrumModel",
    "DomainError",
    "eval_basis",
    "eval_matrix",
    "eval_legendre",
    "legendre_table",
    "legendre_eigenvalue",
    "legendre_kernel_diag",
    "legendre_trace_tail",
    "legendre_weighted_tail",
]

_FAMILIES = ("fourier", "chebyshev", "legendre", "wavelet")
CLAMP = 1e-15


class DomainError(ValueError):
    """A point lies outside the domain of a basis family."""


@dataclass(frozen=True)
class BasisFamily:
    """Descriptor of a tensor-product orthonormal system.

    ``wavelet`` carries a :class:`recovery.wavelet.WaveletSpec`; it is only
    used by the wavelet module.
    """

    kind: str
    dim: int = 1
    wavelet: object | None = None

    def __post_init__(self) -> None:
        if self.kind not in _FAMILIES:
            raise ValueError(f"unknown basis family {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dimension must be at least 1")
        if self.kind == "legendre" and self.dim != 1:
            raise ValueError("the Legendre family is univariate")

    @property
    def nonnegative(self) -> bool:
        """Whether indices live in ``N_0^d`` rather than ``Z^d``."""
        return self.kind in ("chebyshev", "legendre")

    @property
    def is_real(self) -> bool:
        """Whether the basis functions are real valued."""
        return self.kind != "fourier"


def _points(x: np.ndarray | Sequence[float], dim: int) -> np.ndarray:
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts.reshape(1, -1) if dim > 1 and pts.shape[0] == dim else pts.reshape(-1, 1)
    if pts.shape[1] != dim:
        raise ValueError(f"points have dimension {pts.shape[1]}, expected {dim}")
    return pts


def _checked_cube(x: np.ndarray) -> np.ndarray:
    """Validate points of ``[-1, 1]`` and clamp values within CLAMP of the ends."""
    if np.any(np.abs(x) > 1.0 + CLAMP) or not np.all(np.isfinite(x)):
        raise DomainError("point outside [-1, 1]")
    return np.clip(x, -1.0, 1.0)


def _chebyshev_factor(h: np.ndarray, theta: np.ndarray) -> np.ndarray:
    scale = np.where(h > 0, math.sqrt(2.0), 1.0)
    return scale * np.cos(h * theta)


def eval_matrix(family: BasisFamily, indices: np.ndarray | IndexSet, points: np.ndarray) -> np.ndarray:
    """Matrix ``(eta_k(x^j))_{j, k}`` of shape ``(n, M)``.

    Raises
    ------
    DomainError
        If a point lies outside the family's domain.
    """
    if family.kind == "wavelet":
        from .wavelet import eval_wavelet_matrix

        return eval_wavelet_matrix(family.wavelet, indices, points)
    idx = indices.indices if isinstance(indices, IndexSet) else np.atleast_2d(np.asarray(indices, dtype=np.int64))
    if idx.shape[1] != family.dim:
        raise ValueError("index dimension does not match the basis family")
    pts = _points(points, family.dim)
    n, M = pts.shape[0], idx.shape[0]
    if family.kind == "fourier":
        if not np.all(np.isfinite(pts)):
            raise DomainError("nonfinite point")
        phase = (pts % 1.0) @ idx.T.astype(float)
        return np.exp(2j * np.pi * phase)
    if family.kind == "chebyshev":
        if np.any(idx < 0):
            raise ValueError("Chebyshev indices must be nonnegative")
        theta = np.arccos(_checked_cube(pts))
        out = np.ones((n, M))
        for t in range(family.dim):
            out *= _chebyshev_factor(idx[None, :, t], theta[:, t, None])
        return out
    if family.kind == "legendre":
        if np.any(idx < 0):
            raise ValueError("Legendre degrees must be nonnegative")
        table = legendre_table(int(idx.max()) if M else 0, pts[:, 0])
    return table[:, idx[:, 0]]


def eval_basis(family: BasisFamily, k: Sequence[int], x: Sequence[float] | float) -> complex:
    """Value ``eta_k(x)`` at a single point."""
    pts = np.asarray(x, dtype=float).reshape(1, family.dim)
    val = eval_matrix(family, np.asarray([tuple(k)], dtype=np.int64), pts)[0, 0]
    return complex(val)


def _legendre_values(x: np.ndarray, max_degree: int) -> Iterator[np.ndarray]:
    """Yield ``sqrt(2k+1) P_k(x)`` for ``k = 0..max_degree`` via the three-term recurrence."""
    p_prev = np.ones_like(x)
    yield p_prev
    if max_degree == 0:
        return
    p = x.copy()
    yield math.sqrt(3.0) * p
    for k in range(1, max_degree):
        p_next = ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
        p_prev, p = p, p_next
        yield math.sqrt(2 * k + 3) * p


def legendre_table(max_degree: int, x: np.ndarray | Sequence[float]) -> np.ndarray:
    """Normalized Legendre values, shape ``(len(x), max_degree + 1)``."""
    xs = _checked_cube(np.atleast_1d(np.asarray(x, dtype=float)))
    if max_degree < 0:
        raise ValueError("degree must be nonnegative")
    out = np.empty((xs.shape[0], max_degree + 1))
    for k, col in enumerate(_legendre_values(xs, max_degree)):
        out[:, k] = col
    return out


def eval_legendre(degree: int, x: float | np.ndarray) -> float | np.ndarray:
    """``sqrt(2 degree + 1) P_degree(x)``, orthonormal for ``dx / 2`` on ``[-1, 1]``."""
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    vals = legendre_table(degree, xs)[:, degree]
    return float(vals[0]) if np.ndim(x) == 0 else vals


def legendre_eigenvalue(degree: np.ndarray | int, s: float) -> np.ndarray | float:
    """Eigenvalue ``(1 + (k(k+1))^s)^(-1)`` attached to degree ``k``."""
    k = np.asarray(degree, dtype=float)
    lam = 1.0 / (1.0 + (k * (k + 1.0)) ** s)
    return float(lam) if np.ndim(degree) == 0 else lam


def legendre_weighted_tail(s: float, after: int) -> float:
    """Upper bound of ``sum_{k > after} lambda_k (2k + 1)``.

    ``(2k+1)(k(k+1))^(-s)`` is the derivative of ``-(k(k+1))^(1-s)/(s-1)`` and is
    decreasing, so the sum is bounded by the integral from ``after`` onwards.
    """
    if s <= 1:
        raise ValueError("the weighted tail requires s > 1")
    if after < 1:
        raise ValueError("tail bound needs after >= 1")
    return (after * (after + 1.0)) ** (1.0 - s) / (s - 1.0)


def legendre_trace_tail(s: float, start: int, trunc: int) -> tuple[float, float]:
    """``sum_{k >= start} lambda_k`` truncated at ``trunc`` plus an integral remainder.

    Returns
    -------
    (value, remainder)
        ``value`` sums degrees ``start..trunc``; the true tail lies in
        ``[value, value + remainder]``.
    """
    if trunc < start:
        raise ValueError("truncation below the start degree")
    k = np.arange(start, trunc + 1, dtype=float)
    value = math.fsum(legendre_eigenvalue(k, s))
    remainder = float(trunc) ** (1.0 - 2.0 * s) / (2.0 * s - 1.0)
    return value, remainder


def legendre_kernel_diag(s: float, x: float | np.ndarray, truncation: int) -> tuple[np.ndarray | float, float]:
    """Kernel diagonal ``K(x, x) = sum_k lambda_k eta_k(x)^2`` truncated at degree ``truncation``.

    Returns
    -------
    (value, tail_bound)
        ``value <= K(x, x) <= value + tail_bound`` for every ``x``.
    """
    if s <= 1:
        raise ValueError("kernel diagonal requires s > 1")
    if truncation < 2:
        raise ValueError("truncation must be at least 2")
    xs = _checked_cube(np.atleast_1d(np.asarray(x, dtype=float)))
    acc = np.zeros_like(xs)
    for k, col in enumerate(_legendre_values(xs, truncation)):
        acc += legendre_eigenvalue(k, s) * col * col
    tail = legendre_weighted_tail(s, truncation)
    return (float(acc[0]) if np.ndim(x) == 0 else acc), tail


@dataclass(frozen=True)
class SpectrumModel:
    """Eigenpairs ``(lambda_j, eta_j)`` of the kernel behind a function class.

    ``fourier``: tensor Fourier system ordered by a weight rule, ``lambda_j = w(k_j)^(-2)``.
    ``legendre``: univariate normalized Legendre polynomials with
    ``lambda_j = (1 + (k(k+1))^s)^(-1)`` and ``k = j - 1``.
    """

    kind: str
    dim: int = 1
    rule: WeightRule | None = None
    s: float = 2.0

    def __post_init__(self) -> None:
        if self.kind not in ("fourier", "legendre"):
            raise ValueError(f"unsupported spectrum model {self.kind!r}")
        if self.kind == "fourier" and (self.rule is None or self.rule.kind not in ("star", "pound")):
            raise ValueError("a Fourier model needs a star or pound weight rule")
        if self.kind == "legendre" and self.dim != 1:
            raise ValueError("the Legendre model is univariate")

    @property
    def basis(self) -> BasisFamily:
        return BasisFamily(self.kind, self.dim)

    def index_set(self, size: int) -> IndexSet:
        """The first ``size`` eigenfunctions in nonincreasing eigenvalue order."""
        if self.kind == "fourier":
            return hyperbolic_cross(self.dim, size, self.rule)
        deg = np.arange(size, dtype=np.int64)[:, None]
        return IndexSet(1, WeightRule("plain"), deg, 1.0 / np.sqrt(legendre_eigenvalue(deg[:, 0], self.s)), True)

    def eigenvalues(self, size: int) -> np.ndarray:
        """``lambda_1, ..., lambda_size``."""
        if self.kind == "fourier":
            return 1.0 / self.index_set(size).weights ** 2
        return legendre_eigenvalue(np.arange(size), self.s)

    def singular_values(self, size: int) -> np.ndarray:
        """``sigma_j = sqrt(lambda_j)``."""
        return np.sqrt(self.eigenvalues(size))
