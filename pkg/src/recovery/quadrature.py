"""Cubature weights derived from the least-squares system.

Integrating the least-squares approximant ``S f = sum_k c_k eta_k`` gives
``Q f = b^T c = b^T (L^* L)^{-1} L^* f = q^T f`` with ``b_k = int eta_k`` and

    ``q = conj(u)``,  ``u`` the minimum-norm solution of ``L^* u = conj(b)``.

The weights are obtained from that ``M x n`` underdetermined system (a thin QR
for dense designs, LSQR for matrix-free or sparse ones) instead of forming
``(L^* L)^{-1}``.  For density-weighted designs ``L~ = D L`` with
``D = diag(rho^(-1/2))`` the reweighted rule is ``q~ = D conj(u~)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .bases import BasisFamily
from .index import IndexSet
from .leastsq import (
    EIG_DENSE_LIMIT,
    Approximant,
    DesignMatrix,
    RankDeficiencyError,
    RANK_THRESHOLD,
    smallest_gram_eigenvalue,
)
from .sampling import NodeSet

__all__ = [
    "CubatureRule",
    "MEASURES",
    "basis_integrals",
    "cubature_weights",
    "reweighted_cubature_weights",
    "integrate",
    "integrate_approximant",
    "save_cubature",
    "load_cubature",
]

MEASURES = ("torus", "cube", "base", "omega")
"""Supported target measures.

``torus``: Lebesgue measure on ``[0, 1)^d`` (Fourier family).
``cube``: Lebesgue measure on ``[-1, 1]^d`` (Chebyshev and Legendre families).
``base``: the family's own probability measure, for which ``b`` is the indicator of the constant.
``omega``: uniform probability measure on the extended wavelet domain.
"""
ADJOINT_TOL = 1e-14
ADJOINT_MAXIT = 2000


@dataclass(frozen=True)
class CubatureRule:
    """Nodes with complex weights; ``Q f = sum_j w_j f(x^j)``."""

    nodes: NodeSet
    weights: np.ndarray
    measure: str

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=complex).reshape(-1)
        if w.shape[0] != self.nodes.n:
            raise ValueError("one weight per node is required")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


def _indices(iset) -> np.ndarray:
    return iset.indices if isinstance(iset, IndexSet) else np.asarray(iset.indices)


def _chebyshev_factor_integral(h: np.ndarray) -> np.ndarray:
    hf = h.astype(float)
    out = np.zeros_like(hf)
    out[h == 0] = 2.0
    even = (h > 0) & (h % 2 == 0)
    out[even] = 2.0 * math.sqrt(2.0) / (1.0 - hf[even] ** 2)
    return out


def basis_integrals(family: BasisFamily, iset, measure: str) -> np.ndarray:
    """``b_k = int eta_k d mu`` for every index of the set.

    Raises
    ------
    ValueError
        For an unsupported pairing of family and measure.
    """
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}")
    if family.kind == "wavelet":
        if measure != "omega":
            raise ValueError("wavelet integrals are available for the uniform extended-domain measure")
        from .wavelet import wavelet_basis_integrals

        return wavelet_basis_integrals(family.wavelet, iset).astype(complex)
    idx = _indices(iset)
    const = np.all(idx == 0, axis=1).astype(complex)
    if measure == "base":
        return const
    if family.kind == "fourier" and measure == "torus":
        return const
    if family.kind == "chebyshev" and measure == "cube":
        vals = np.ones(idx.shape[0])
        for t in range(idx.shape[1]):
            vals = vals * _chebyshev_factor_integral(idx[:, t])
        return vals.astype(complex)
    if family.kind == "legendre" and measure == "cube":
        return 2.0 * const
    raise ValueError(f"measure {measure!r} is not supported for the {family.kind} family")


def _check_rank(A: DesignMatrix) -> None:
    if A.M <= EIG_DENSE_LIMIT and A.storage != "nufft":
        lam = smallest_gram_eigenvalue(A)
        if lam < RANK_THRESHOLD:
            raise RankDeficiencyError(f"smallest Gram eigenvalue {lam:.3e} below {RANK_THRESHOLD}")


def _min_norm_adjoint(A: DesignMatrix, v: np.ndarray) -> np.ndarray:
    """Minimum-norm ``u`` with ``A^* u = v``."""
    if A.storage == "dense":
        mat = np.asarray(A.data)
        q, r = np.linalg.qr(mat, mode="reduced")
        # sigma(L) = sigma(R), so lambda_min of (1/n) L^* L comes from the small factor.
        tau = scipy.linalg.svdvals(r)
        if tau.size and tau[-1] ** 2 / A.n < RANK_THRESHOLD:
            raise RankDeficiencyError("design matrix is rank deficient")
        y = scipy.linalg.solve_triangular(r, v, trans="C")
        return q @ y
    _check_rank(A)
    dt = np.dtype(complex)
    adj = spla.LinearOperator((A.M, A.n), matvec=lambda y: A.rmatvec(np.asarray(y, dtype=complex)),
                              rmatvec=lambda c: A.matvec(np.asarray(c, dtype=complex)), dtype=dt)
    result = spla.lsqr(adj, v.astype(complex), atol=ADJOINT_TOL, btol=ADJOINT_TOL, iter_lim=ADJOINT_MAXIT)
    if int(result[1]) in (3, 6):
        raise RankDeficiencyError("LSQR reports a numerically singular design")
    return result[0]


def cubature_weights(A: DesignMatrix, b: np.ndarray, nodes: NodeSet, measure: str = "base") -> CubatureRule:
    """Weights ``q = conj(L) conj((L^* L)^{-1}) b`` of the implicit least-squares integration.

    Raises
    ------
    RankDeficiencyError
        If the design lacks full column rank.
    """
    b = np.asarray(b, dtype=complex).reshape(-1)
    if b.shape[0] != A.M:
        raise ValueError("integral vector length must equal the number of columns")
    if nodes.n != A.n:
        raise ValueError("node count does not match the design")
    u = _min_norm_adjoint(A, np.conj(b))
    return CubatureRule(nodes, np.conj(u), measure)


def reweighted_cubature_weights(A: DesignMatrix, b: np.ndarray, nodes: NodeSet,
                                measure: str = "base") -> CubatureRule:
    """``q~ = D conj(u~)`` for a density-weighted design ``L~ = D L``; zero where ``rho = 0``."""
    if not A.weighted:
        raise ValueError("a density-weighted design is required")
    if nodes.densities is None:
        raise ValueError("nodes carry no densities")
    rho = nodes.densities
    scale = np.zeros_like(rho)
    pos = rho > 0
    scale[pos] = 1.0 / np.sqrt(rho[pos])
    rule = cubature_weights(A, b, nodes, measure)
    return CubatureRule(nodes, scale * rule.weights, measure)


def integrate(rule: CubatureRule, samples: np.ndarray) -> complex:
    """``Q f = q^T f`` (no conjugation)."""
    samples = np.asarray(samples)
    if samples.shape != (rule.nodes.n,):
        raise ValueError("sample count does not match the rule")
    return complex(rule.weights @ samples)


def integrate_approximant(approx: Approximant, b: np.ndarray) -> complex:
    """``int S f = sum_k c_k b_k``, the coefficient-side view of the same rule."""
    return complex(np.asarray(b) @ approx.coefficients)


def save_cubature(rule: CubatureRule, path: str | Path) -> None:
    """CSV ``x1,...,xd,w_re,w_im``."""
    d = rule.nodes.dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(d)] + ["w_re", "w_im"])
        for x, w in zip(rule.nodes.points, rule.weights):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(w.real)), repr(float(w.imag))])


def load_cubature(path: str | Path, measure: str = "base") -> CubatureRule:
    """Inverse of :func:`save_cubature`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in r] for r in reader if r]
    if header[-2:] != ["w_re", "w_im"]:
        raise ValueError("malformed cubature header")
    arr = np.asarray(rows, dtype=float).reshape(-1, len(header))
    d = len(header) - 2
    nodes = NodeSet(arr[:, :d], "external")
    return CubatureRule(nodes, arr[:, d] + 1j * arr[:, d + 1], measure)
