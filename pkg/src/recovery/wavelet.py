"""Hyperbolic wavelet regression with Haar and Daubechies wavelets.

Level convention per axis: level ``0`` holds the scaling functions
``phi(x - k)``; level ``j >= 1`` holds ``2^((j-1)/2) psi(2^(j-1) x - k)``.
The index set of budget ``l`` collects all level vectors with ``|j|_1 <= l``
and, per level, every shift whose support meets ``(0, 1)^d``.  Sampling takes
place on the extended domain ``Omega`` (the hull of those supports) where the
rescaled system ``sqrt(|Omega|) psi_{j,k}`` is orthonormal for the uniform
probability measure.

Daubechies scaling functions are tabulated on the dyadic grid ``2^-J`` by the
cascade algorithm (exact integer values from the refinement eigenproblem, then
repeated two-scale refinement) and evaluated by linear interpolation.
"""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse
from scipy.special import comb

from .bases import BasisFamily
from .leastsq import DEFAULT_MAXIT, DEFAULT_TOL, Approximant, DesignMatrix, least_squares
from .sampling import NodeSet, RngStream, draw_uniform_box

__all__ = [
    "WaveletSpec",
    "WaveletIndexSet",
    "OversamplingWarning",
    "daubechies_filter",
    "build_wavelet_index_set",
    "extended_domain",
    "eval_wavelet",
    "eval_wavelet_matrix",
    "assemble_sparse_design",
    "hyperbolic_wavelet_regression",
    "evaluate_wavelet_expansion",
    "wavelet_basis_integrals",
    "wavelet_spectral_function",
    "draw_extended_domain",
    "l2_error_unit_cube",
    "save_wavelet_approximant",
    "load_wavelet_approximant",
]

DEFAULT_DEPTH = 14


class OversamplingWarning(UserWarning):
    """Fewer samples than the size-times-log-n contract of the regression asks for."""


def daubechies_filter(order: int) -> np.ndarray:
    """Low-pass filter ``h`` (length ``2 order``, ``sum h = sqrt 2``) with ``order`` vanishing moments.

    Spectral factorization of ``sum_{k<order} C(order-1+k, k) y^k`` with
    ``y = (2 - z - 1/z) / 4``, keeping the roots inside the unit circle.
    """
    if order < 1:
        raise ValueError("order must be at least 1")
    if order == 1:
        return np.array([1.0, 1.0]) / math.sqrt(2.0)
    # z^(order-1) P(y(z)) with y z = -(z - 1)^2 / 4, coefficients in descending powers.
    yz = np.array([-0.25, 0.5, -0.25])
    poly = np.zeros(2 * order - 1)
    for k in range(order):
        term = float(comb(order - 1 + k, k, exact=True)) * np.ones(1)
        for _ in range(k):
            term = np.convolve(term, yz)
        pad = order - 1 - k
        poly += np.concatenate([np.zeros(pad), term, np.zeros(pad)])
    roots = np.roots(poly)
    inside = roots[np.abs(roots) < 1.0]
    h = np.poly(np.concatenate([-np.ones(order), inside])).real
    return h * math.sqrt(2.0) / h.sum()


@dataclass(frozen=True)
class WaveletSpec:
    """Wavelet family with its refinement tables.

    ``support`` is the length ``L`` of ``supp phi = supp psi = [0, L]``.
    """

    family: str = "daubechies"
    order: int = 3
    depth: int = DEFAULT_DEPTH

    def __post_init__(self) -> None:
        if self.family not in ("haar", "daubechies"):
            raise ValueError(f"unknown wavelet family {self.family!r}")
        if self.family == "haar":
            object.__setattr__(self, "order", 1)
        if self.order < 1 or self.depth < 1:
            raise ValueError("order and depth must be positive")

    @classmethod
    def haar(cls) -> "WaveletSpec":
        return cls("haar", 1)

    @classmethod
    def daubechies(cls, order: int, depth: int = DEFAULT_DEPTH) -> "WaveletSpec":
        return cls("daubechies", order, depth)

    @property
    def is_haar(self) -> bool:
        return self.family == "haar" or self.order == 1

    @property
    def support(self) -> int:
        return 2 * self.order - 1

    @cached_property
    def lowpass(self) -> np.ndarray:
        return daubechies_filter(self.order)

    @cached_property
    def highpass(self) -> np.ndarray:
        h = self.lowpass
        L = h.size - 1
        return np.array([(-1) ** k * h[L - k] for k in range(L + 1)])

    @cached_property
    def tables(self) -> tuple[np.ndarray, np.ndarray]:
        """Values of ``phi`` and ``psi`` at ``i 2^-J`` for ``i = 0..L 2^J``."""
        if self.is_haar:
            grid = np.arange(2 ** self.depth + 1) / 2.0 ** self.depth
            phi = np.where(grid < 1.0, 1.0, 0.0)
            psi = np.where(grid < 0.5, 1.0, -1.0) * phi
            return phi, psi
        phi = _cascade(self.lowpass, self.depth)
        psi = _two_scale(phi, self.highpass, self.depth)
        return phi, psi

    def two_scale_residual(self) -> float:
        """Largest violation of ``phi(x) = sqrt 2 sum h_k phi(2x - k)`` over grid points ``i 2^-(J-1)``."""
        phi, _ = self.tables
        if self.is_haar:
            return 0.0
        coarse = phi[::2]
        rebuilt = _two_scale(phi, self.lowpass, self.depth)[::2]
        return float(np.max(np.abs(coarse - rebuilt)))

    @cached_property
    def interpolation_error(self) -> float:
        """Estimate of the linear-interpolation error of the tables.

        The gap between the depth-``J`` values at odd grid points and the
        interpolation of their even neighbours is the interpolation error of the
        depth ``J - 1`` tables, an upper estimate for depth ``J``.
        """
        if self.is_haar:
            return 0.0
        worst = 0.0
        for tab in self.tables:
            mid = 0.5 * (tab[:-2:2] + tab[2::2])
            worst = max(worst, float(np.max(np.abs(tab[1:-1:2] - mid))))
        return worst


def _cascade(h: np.ndarray, depth: int) -> np.ndarray:
    """Scaling function on the dyadic grid of ``[0, L]`` with spacing ``2^-depth``."""
    L = h.size - 1
    # Integer values: phi(i) = sqrt 2 sum_k h_k phi(2i - k), an eigenvector for eigenvalue one.
    A = np.zeros((L + 1, L + 1))
    for i in range(L + 1):
        for k in range(L + 1):
            if 0 <= 2 * i - k <= L:
                A[i, 2 * i - k] += math.sqrt(2.0) * h[k]
    vals, vecs = np.linalg.eig(A)
    v = vecs[:, int(np.argmin(np.abs(vals - 1.0)))].real
    table = v / v.sum()
    for level in range(1, depth + 1):
        new = np.zeros(L * 2 ** level + 1)
        new[::2] = table
        new[1::2] = _refine_odd(table, h, level, L)
        table = new
    return table


def _refine_odd(table: np.ndarray, h: np.ndarray, level: int, L: int) -> np.ndarray:
    """Values at odd indices ``i`` of the spacing-``2^-level`` grid from the previous table.

    ``phi(i 2^-level) = sqrt 2 sum_k h_k phi(i 2^-(level-1) - k)``, and
    ``i 2^-(level-1) - k`` is grid index ``i - k 2^(level-1)`` of the previous table.
    """
    odd = np.arange(1, L * 2 ** level + 1, 2)
    out = np.zeros(odd.size)
    top = table.size - 1
    for k in range(L + 1):
        pos = odd - k * 2 ** (level - 1)
        ok = (pos >= 0) & (pos <= top)
        out[ok] += math.sqrt(2.0) * h[k] * table[pos[ok]]
    return out


def _two_scale(phi: np.ndarray, filt: np.ndarray, depth: int) -> np.ndarray:
    """``sqrt 2 sum_k filt_k phi(2x - k)`` on the depth-``J`` grid (values from the table)."""
    L = filt.size - 1
    n = phi.size
    idx = np.arange(n)
    out = np.zeros(n)
    scale = 2 ** depth
    for k in range(L + 1):
        pos = 2 * idx - k * scale
        ok = (pos >= 0) & (pos < n)
        out[ok] += math.sqrt(2.0) * filt[k] * phi[pos[ok]]
    return out


def _lookup(table: np.ndarray, t: np.ndarray, depth: int, L: int, haar: bool) -> np.ndarray:
    """Table value at real arguments ``t``; zero outside ``[0, L)``."""
    out = np.zeros_like(t, dtype=float)
    inside = (t >= 0.0) & (t < L)
    if not np.any(inside):
        return out
    u = t[inside] * 2.0 ** depth
    i = np.floor(u).astype(np.int64)
    if haar:
        out[inside] = table[i]
        return out
    i = np.minimum(i, table.size - 2)
    frac = u - i
    out[inside] = (1.0 - frac) * table[i] + frac * table[i + 1]
    return out


def eval_wavelet(spec: WaveletSpec, j: int, k: int | np.ndarray, x: float | np.ndarray) -> np.ndarray | float:
    """Univariate ``phi(x - k)`` (``j = 0``) or ``2^((j-1)/2) psi(2^(j-1) x - k)`` (``j >= 1``)."""
    if j < 0:
        raise ValueError("level must be nonnegative")
    xs = np.asarray(x, dtype=float)
    phi, psi = spec.tables
    if j == 0:
        val = _lookup(phi, xs - np.asarray(k), spec.depth, spec.support, spec.is_haar)
    else:
        sc = 2.0 ** (j - 1)
        val = math.sqrt(sc) * _lookup(psi, sc * xs - np.asarray(k), spec.depth, spec.support, spec.is_haar)
    return float(val) if np.ndim(val) == 0 else val


# --- index sets and domain --------------------------------------------------------------------

def _shift_range(spec: WaveletSpec, j: int) -> tuple[int, int]:
    """Shifts ``k`` whose support ``(k, k + L) / 2^j'`` meets ``(0, 1)``; inclusive bounds."""
    scale = 2 ** max(j - 1, 0)
    return 1 - spec.support, scale - 1


def _levels(d: int, budget: int) -> list[tuple[int, ...]]:
    out = [j for j in itertools.product(range(budget + 1), repeat=d) if sum(j) <= budget]
    return sorted(out)


@dataclass(frozen=True)
class WaveletIndexSet:
    """Entries ``(j, k)`` stored as rows ``(j_1..j_d, k_1..k_d)``, levels lexicographic, shifts ascending."""

    dim: int
    level: int
    spec: WaveletSpec
    indices: np.ndarray
    blocks: tuple = field(default=(), repr=False)
    """Per level vector: ``(j, column offset, lower shift, shape)``."""

    def __len__(self) -> int:
        return self.indices.shape[0]

    @property
    def levels(self) -> np.ndarray:
        return self.indices[:, : self.dim]

    @property
    def shifts(self) -> np.ndarray:
        return self.indices[:, self.dim:]


def build_wavelet_index_set(d: int, level: int, spec: WaveletSpec) -> WaveletIndexSet:
    """All ``(j, k)`` with ``|j|_1 <= level`` and ``supp psi_{j,k}`` meeting ``(0, 1)^d``."""
    if d < 1 or level < 0:
        raise ValueError("need d >= 1 and level >= 0")
    rows = []
    blocks = []
    offset = 0
    for j in _levels(d, level):
        ranges = [_shift_range(spec, jt) for jt in j]
        lows = tuple(r[0] for r in ranges)
        shape = tuple(r[1] - r[0] + 1 for r in ranges)
        ks = np.array(list(itertools.product(*[range(lo, hi + 1) for lo, hi in ranges])), dtype=np.int64)
        rows.append(np.column_stack([np.tile(np.asarray(j, dtype=np.int64), (ks.shape[0], 1)), ks]))
        blocks.append((j, offset, lows, shape))
        offset += ks.shape[0]
    idx = np.concatenate(rows)
    idx.setflags(write=False)
    return WaveletIndexSet(d, level, spec, idx, tuple(blocks))


def extended_domain(d: int, level: int, spec: WaveletSpec) -> tuple[tuple[float, float], ...]:
    """Per-axis hull of all supports in the index set; the level-0 supports are the widest."""
    if level < 0:
        raise ValueError("level must be nonnegative")
    L = spec.support
    lo, hi = 1 - L, L  # shifts 1-L..0 at level 0 cover [1-L, L]
    return tuple((float(lo), float(hi)) for _ in range(d))


def _volume(box) -> float:
    return float(np.prod([hi - lo for lo, hi in box]))


def draw_extended_domain(n: int, d: int, level: int, spec: WaveletSpec, stream: RngStream) -> NodeSet:
    """Uniform nodes on the extended domain."""
    return draw_uniform_box(n, extended_domain(d, level, spec), stream)


# --- design matrices --------------------------------------------------------------------------

def _axis_entries(spec: WaveletSpec, j: int, x: np.ndarray, lo: int, size: int):
    """Per node: the ``L`` candidate shifts (relative to ``lo``), their values and validity."""
    L = spec.support
    phi, psi = spec.tables
    sc = 2.0 ** max(j - 1, 0)
    base = np.floor(sc * x).astype(np.int64)
    cand = base[:, None] - np.arange(L)[None, :]
    t = sc * x[:, None] - cand
    tab = phi if j == 0 else psi
    vals = _lookup(tab, t.ravel(), spec.depth, L, spec.is_haar).reshape(t.shape)
    if j > 0:
        vals = vals * math.sqrt(sc)
    rel = cand - lo
    ok = (rel >= 0) & (rel < size) & (vals != 0.0)
    return rel, vals, ok


def _sparse_values(spec: WaveletSpec, iset: WaveletIndexSet, pts: np.ndarray, scale: float):
    n, d = pts.shape
    L = spec.support
    rows_all, cols_all, vals_all = [], [], []
    for j, offset, lows, shape in iset.blocks:
        rel_list, val_list, ok_list = zip(*[_axis_entries(spec, j[t], pts[:, t], lows[t], shape[t])
                                            for t in range(d)])
        for combo in itertools.product(range(L), repeat=d):
            ok = np.ones(n, dtype=bool)
            val = np.full(n, scale)
            col = np.zeros(n, dtype=np.int64)
            for t, c in enumerate(combo):
                ok &= ok_list[t][:, c]
                val = val * val_list[t][:, c]
                col = col * shape[t] + rel_list[t][:, c]
            sel = np.flatnonzero(ok)
            rows_all.append(sel)
            cols_all.append(offset + col[sel])
            vals_all.append(val[sel])
    rows = np.concatenate(rows_all)
    cols = np.concatenate(cols_all)
    vals = np.concatenate(vals_all)
    return scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(n, len(iset)))


def row_nnz_bound(spec: WaveletSpec, iset: WaveletIndexSet) -> int:
    """``L^d`` times the number of level vectors."""
    return spec.support ** iset.dim * len(iset.blocks)


def assemble_sparse_design(nodes: NodeSet, iset: WaveletIndexSet, spec: WaveletSpec) -> DesignMatrix:
    """CSR design with entries ``sqrt(|Omega|) psi_{j,k}(x^u)``.

    Raises
    ------
    ValueError
        If a node lies outside the extended domain.
    AssertionError
        If a row exceeds the sparsity bound (cannot happen for valid tables).
    """
    box = extended_domain(iset.dim, iset.level, spec)
    pts = nodes.points
    if pts.shape[1] != iset.dim:
        raise ValueError("node dimension does not match the index set")
    for t, (lo, hi) in enumerate(box):
        if np.any(pts[:, t] < lo) or np.any(pts[:, t] > hi):
            raise ValueError("nodes must lie in the extended domain")
    mat = _sparse_values(spec, iset, pts, math.sqrt(_volume(box)))
    nnz = np.diff(mat.indptr)
    assert nnz.max(initial=0) <= row_nnz_bound(spec, iset), "row sparsity bound violated"
    family = BasisFamily("wavelet", iset.dim, spec)
    return DesignMatrix(nodes.n, len(iset), "sparse", mat, family, iset, dtype=float)


def eval_wavelet_matrix(spec: WaveletSpec, iset: WaveletIndexSet, points: np.ndarray) -> np.ndarray:
    """Dense ``sqrt(|Omega|) psi_{j,k}(x)``; zero outside the supports."""
    pts = np.asarray(points, dtype=float).reshape(-1, iset.dim)
    box = extended_domain(iset.dim, iset.level, spec)
    return _sparse_values(spec, iset, pts, math.sqrt(_volume(box))).toarray()


def wavelet_basis_integrals(spec: WaveletSpec, iset: WaveletIndexSet) -> np.ndarray:
    """``int sqrt(|Omega|) psi_{j,k} dx / |Omega|``: ``|Omega|^(-1/2)`` on pure scaling entries, else 0."""
    box = extended_domain(iset.dim, iset.level, spec)
    scaling = np.all(iset.levels == 0, axis=1)
    return scaling / math.sqrt(_volume(box))


def wavelet_spectral_function(d: int, level: int, spec: WaveletSpec, grid_size: int = 4097) -> tuple[float, int]:
    """Grid supremum over ``Omega`` of ``sum_{(j,k) in I} |sqrt(|Omega|) psi_{j,k}|^2``.

    Returns the value and the number of grid points used.
    """
    iset = build_wavelet_index_set(d, level, spec)
    box = extended_domain(d, level, spec)
    axes = [np.linspace(lo, hi, grid_size) for lo, hi in box]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    scale = math.sqrt(_volume(box))
    best = 0.0
    for start in range(0, mesh.shape[0], 100_000):
        mat = _sparse_values(spec, iset, mesh[start:start + 100_000], scale)
        best = max(best, float(np.max(np.asarray(mat.multiply(mat).sum(axis=1)))))
    return best, mesh.shape[0]


# --- regression -------------------------------------------------------------------------------

def hyperbolic_wavelet_regression(nodes: NodeSet, samples: np.ndarray, level: int, spec: WaveletSpec,
                                  tol: float = DEFAULT_TOL, maxit: int = DEFAULT_MAXIT,
                                  solver: str = "lsqr", check_rank: bool = True) -> Approximant:
    """Least-squares fit over the hyperbolic wavelet index set of the given level budget.

    Emits :class:`OversamplingWarning` when ``|I| log n > n``.

    Raises
    ------
    recovery.leastsq.RankDeficiencyError
        If the sparse design is numerically rank deficient.
    """
    iset = build_wavelet_index_set(nodes.dim, level, spec)
    if len(iset) * math.log(max(nodes.n, 2)) > nodes.n:
        warnings.warn(f"{nodes.n} samples for {len(iset)} wavelet coefficients", OversamplingWarning,
                      stacklevel=2)
    family = BasisFamily("wavelet", nodes.dim, spec)
    approx = least_squares(nodes, samples, family, iset, tol=tol, maxit=maxit, solver=solver,
                           check_rank=check_rank)
    approx.metadata.update({"level": level, "family": spec.family, "order": spec.order})
    return approx


def evaluate_wavelet_expansion(approx: Approximant, points: np.ndarray, chunk: int = 100_000) -> np.ndarray:
    """``sum c_{j,k} sqrt(|Omega|) psi_{j,k}(x)`` at arbitrary points (zero outside all supports)."""
    iset: WaveletIndexSet = approx.index_set
    spec = iset.spec
    pts = np.asarray(points, dtype=float).reshape(-1, iset.dim)
    scale = math.sqrt(_volume(extended_domain(iset.dim, iset.level, spec)))
    out = []
    for start in range(0, pts.shape[0], chunk):
        mat = _sparse_values(spec, iset, pts[start:start + chunk], scale)
        out.append(mat @ approx.coefficients)
    return np.concatenate(out) if out else np.zeros(0, dtype=approx.coefficients.dtype)


def l2_error_unit_cube(fn: Callable[[np.ndarray], np.ndarray], approx: Approximant,
                       points: int = 1 << 20, seed: int = 0) -> tuple[float, float]:
    """``||f - S f||_{L2([0,1]^d)}`` by scrambled Sobol quadrature.

    Returns the estimate with ``points`` nodes and the gap to the estimate on
    the first half of them, an empirical error indicator.
    """
    from scipy.stats import qmc

    d = approx.index_set.dim
    x = qmc.Sobol(d, scramble=True, seed=seed).random(points)
    diff = np.abs(np.asarray(fn(x)) - evaluate_wavelet_expansion(approx, x)) ** 2
    full = math.sqrt(float(np.mean(diff)))
    half = math.sqrt(float(np.mean(diff[: points // 2])))
    return full, abs(full - half)


# --- serialization ----------------------------------------------------------------------------

def save_wavelet_approximant(approx: Approximant, path: str | Path) -> None:
    """CSV ``j1..jd,k1..kd,re,im``."""
    iset: WaveletIndexSet = approx.index_set
    d = iset.dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"j{i + 1}" for i in range(d)] + [f"k{i + 1}" for i in range(d)] + ["re", "im"])
        for row, c in zip(iset.indices, approx.coefficients):
            writer.writerow([int(v) for v in row] + [repr(float(np.real(c))), repr(float(np.imag(c)))])


def load_wavelet_approximant(path: str | Path, spec: WaveletSpec) -> Approximant:
    """Inverse of :func:`save_wavelet_approximant`; the level budget is the largest ``|j|_1``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    d = (len(header) - 2) // 2
    idx = np.array([[int(v) for v in r[: 2 * d]] for r in rows], dtype=np.int64)
    coef = np.array([complex(float(r[2 * d]), float(r[2 * d + 1])) for r in rows])
    level = int(idx[:, :d].sum(axis=1).max())
    iset = build_wavelet_index_set(d, level, spec)
    if iset.indices.shape != idx.shape or not np.array_equal(iset.indices, idx):
        raise ValueError("stored indices do not form a complete hyperbolic wavelet index set")
    if not np.any(coef.imag):
        coef = coef.real
    return Approximant(BasisFamily("wavelet", d, spec), iset, coef)
