"""Design matrices, LSQR, plain and density-weighted least squares, Gram diagnostics.

A :class:`DesignMatrix` holds ``eta_k(x^j)`` either densely, as a sparse CSR
matrix (wavelets), or as a matrix-free operator backed by a nonuniform FFT for
large Fourier and Chebyshev problems.  All three expose ``matvec`` and
``rmatvec`` (the exact adjoint) so the solvers never need to know which one
they received.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg as spla

from .bases import BasisFamily, eval_matrix
from .index import IndexSet, WeightRule, load_index_set, save_index_set
from .sampling import NodeSet

__all__ = [
    "DesignMatrix",
    "SolveReport",
    "Approximant",
    "RankDeficiencyError",
    "assemble_design",
    "assemble_weighted_design",
    "lsqr_solve",
    "qr_solve",
    "least_squares",
    "weighted_least_squares",
    "reweighted_samples",
    "gram_deviation",
    "moore_penrose_norm",
    "smallest_gram_eigenvalue",
    "save_approximant",
    "load_approximant",
]

DEFAULT_TOL = 5e-8
DEFAULT_MAXIT = 100
RANK_THRESHOLD = 1e-10
DENSE_ENTRY_LIMIT = 20_000_000
NUFFT_GRID_LIMIT = 60_000_000
NUFFT_EPS = 1e-9
EIG_DENSE_LIMIT = 2000


class RankDeficiencyError(np.linalg.LinAlgError):
    """The empirical Gram matrix is numerically singular."""


class _NufftOperator:
    """Matrix-free ``c -> (sum_k c_k eta_k(x^j))_j`` for Fourier and Chebyshev systems."""

    def __init__(self, family: BasisFamily, iset: IndexSet, points: np.ndarray):
        import finufft

        self._finufft = finufft
        self.family = family
        self.dim = family.dim
        self.K = max(iset.max_abs, 0)
        self.shape_grid = (2 * self.K + 1,) * self.dim
        idx = iset.indices
        if family.kind == "fourier":
            self.theta = [np.ascontiguousarray(2.0 * np.pi * (points[:, t] % 1.0)) for t in range(self.dim)]
            self.cells = [(tuple(idx[:, t] + self.K for t in range(self.dim)), np.ones(len(iset)))]
        else:
            theta = np.arccos(np.clip(points, -1.0, 1.0))
            self.theta = [np.ascontiguousarray(theta[:, t]) for t in range(self.dim)]
            scale = np.prod(np.where(idx > 0, np.sqrt(2.0), 1.0), axis=1) / 2.0 ** self.dim
            self.cells = [
                (tuple(sign[t] * idx[:, t] + self.K for t in range(self.dim)), scale)
                for sign in product((1, -1), repeat=self.dim)
            ]
        self.n = points.shape[0]
        self.M = len(iset)
        self._plans: dict = {}

    def _plan(self, kind: int):
        if kind not in self._plans:
            plan = self._finufft.Plan(kind, self.shape_grid, eps=NUFFT_EPS, isign=1 if kind == 2 else -1,
                                      dtype="complex128", nthreads=1, upsampfac=1.25)
            plan.setpts(*self.theta)
            self._plans[kind] = plan
        return self._plans[kind]

    def _type2(self, grid: np.ndarray) -> np.ndarray:
        return self._plan(2).execute(grid)

    def _type1(self, y: np.ndarray) -> np.ndarray:
        return self._plan(1).execute(y)

    def matvec(self, c: np.ndarray) -> np.ndarray:
        grid = np.zeros(self.shape_grid, dtype=complex)
        c = np.asarray(c, dtype=complex)
        for cell, scale in self.cells:
            grid[cell] += scale * c
        return self._type2(grid)

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        y = np.ascontiguousarray(y, dtype=complex)
        if self.family.kind == "fourier":
            grid = self._type1(y)
            return grid[self.cells[0][0]]
        # Chebyshev columns are real, so the adjoint is the plain transpose:
        # sum_j y_j eta_h(x_j) gathers conj-free exponentials of both signs.
        grid = np.conj(self._type1(np.conj(y)))
        out = np.zeros(self.M, dtype=complex)
        for cell, scale in self.cells:
            out += scale * grid[cell]
        return out


@dataclass
class DesignMatrix:
    """``n x M`` basis-evaluation matrix with optional row scaling.

    ``storage`` is ``dense``, ``sparse`` or ``nufft``.  ``row_scale`` (if set)
    multiplies row ``j`` and is ``1/sqrt(rho(x^j))`` for weighted designs, zero
    where the density vanishes.
    """

    n: int
    M: int
    storage: str
    data: object
    family: BasisFamily
    index_set: object
    row_scale: np.ndarray | None = None
    weighted: bool = False
    dtype: type = complex

    def matvec(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c)
        if self.storage == "nufft":
            out = self.data.matvec(c)
            if self.dtype is float and not np.iscomplexobj(c):
                out = out.real
            if self.row_scale is not None:
                out = out * self.row_scale
            return out
        return self.data @ c

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        """Adjoint product ``A^* y``."""
        y = np.asarray(y)
        if self.storage == "nufft":
            if self.row_scale is not None:
                y = y * self.row_scale
            out = self.data.rmatvec(y)
            if self.dtype is float and not np.iscomplexobj(y):
                out = out.real
            return out
        return self.data.conj().T @ y

    def operator(self, dtype=None) -> spla.LinearOperator:
        dt = np.dtype(dtype or self.dtype)
        return spla.LinearOperator((self.n, self.M), matvec=self.matvec, rmatvec=self.rmatvec, dtype=dt)

    def to_dense(self) -> np.ndarray:
        if self.storage == "dense":
            return np.asarray(self.data)
        if self.storage == "sparse":
            return self.data.toarray()
        eye = np.eye(self.M, dtype=complex)
        cols = np.column_stack([self.matvec(eye[:, k]) for k in range(self.M)])
        return cols.real if self.dtype is float else cols


def _choose_storage(family: BasisFamily, iset: IndexSet, n: int, storage: str) -> str:
    if storage != "auto":
        return storage
    if family.kind not in ("fourier", "chebyshev") or family.dim > 3:
        return "dense"
    if n * len(iset) <= DENSE_ENTRY_LIMIT:
        return "dense"
    if (2 * iset.max_abs + 1) ** family.dim > NUFFT_GRID_LIMIT:
        return "dense"
    return "nufft"


def assemble_design(family: BasisFamily, iset: IndexSet, nodes: NodeSet, storage: str = "auto") -> DesignMatrix:
    """Plain design ``L[j, k] = eta_k(x^j)``.

    Parameters
    ----------
    storage : {"auto", "dense", "nufft"}
        ``auto`` switches to the matrix-free transform once a dense matrix
        would exceed ``DENSE_ENTRY_LIMIT`` entries.
    """
    if nodes.dim != family.dim or iset.dim != family.dim:
        raise ValueError("dimension mismatch between basis, index set and nodes")
    if family.kind == "wavelet":
        from .wavelet import assemble_sparse_design

        return assemble_sparse_design(nodes, iset, family.wavelet)
    kind = _choose_storage(family, iset, nodes.n, storage)
    dtype = float if family.is_real else complex
    if kind == "nufft":
        if family.kind == "chebyshev":
            from .bases import _checked_cube

            _checked_cube(nodes.points)
        data = _NufftOperator(family, iset, nodes.points)
    else:
        data = eval_matrix(family, iset, nodes.points)
    return DesignMatrix(nodes.n, len(iset), kind, data, family, iset, dtype=dtype)


def _row_scale(nodes: NodeSet) -> np.ndarray:
    if nodes.densities is None:
        raise ValueError("weighted design requires node densities")
    rho = nodes.densities
    scale = np.zeros_like(rho)
    pos = rho > 0
    scale[pos] = 1.0 / np.sqrt(rho[pos])
    return scale


def assemble_weighted_design(family: BasisFamily, iset: IndexSet, nodes: NodeSet,
                             storage: str = "auto") -> DesignMatrix:
    """Weighted design ``eta_k(x^j) / sqrt(rho(x^j))`` with zero rows where ``rho = 0``."""
    scale = _row_scale(nodes)
    base = assemble_design(family, iset, nodes, storage)
    if base.storage == "nufft":
        base.row_scale = scale
    elif base.storage == "sparse":
        base.data = scipy.sparse.diags(scale) @ base.data
    else:
        base.data = base.data * scale[:, None]
    base.weighted = True
    return base


@dataclass(frozen=True)
class SolveReport:
    """Outcome of an iterative or direct solve."""

    iterations: int
    relative_residual: float
    reason: str
    converged: bool
    cond_estimate: float = float("nan")


_LSQR_REASONS = {
    0: "zero_solution",
    1: "consistent_tolerance",
    2: "least_squares_tolerance",
    3: "condition_limit",
    4: "consistent_machine_precision",
    5: "least_squares_machine_precision",
    6: "condition_machine_precision",
    7: "iteration_limit",
}


def lsqr_solve(A: DesignMatrix, rhs: np.ndarray, tol: float = DEFAULT_TOL,
               maxit: int = DEFAULT_MAXIT) -> tuple[np.ndarray, SolveReport]:
    """Minimize ``||rhs - A c||_2`` with LSQR.

    The stopping rule is the standard LSQR pair: stop when
    ``||r|| <= btol ||b|| + atol ||A|| ||c||`` (consistent systems) or
    ``||A^* r|| <= atol ||A|| ||r||`` (inconsistent systems), with
    ``atol = btol = tol``.
    """
    rhs = np.asarray(rhs)
    if rhs.shape != (A.n,):
        raise ValueError("right-hand side length does not match the design")
    if not np.all(np.isfinite(rhs)):
        raise ValueError("nonfinite right-hand side")
    if A.n < A.M or A.M < 1:
        raise ValueError("LSQR expects n >= M >= 1")
    dtype = complex if (A.dtype is complex or np.iscomplexobj(rhs)) else float
    op = A.operator(dtype)
    result = spla.lsqr(op, rhs.astype(dtype), atol=tol, btol=tol, iter_lim=maxit)
    coef, istop, itn, r1norm = result[0], result[1], result[2], result[3]
    acond = result[6]
    bnorm = float(np.linalg.norm(rhs))
    rel = float(r1norm / bnorm) if bnorm > 0 else 0.0
    report = SolveReport(int(itn), rel, _LSQR_REASONS.get(int(istop), str(istop)),
                         int(istop) in (0, 1, 2, 4, 5), float(acond))
    return coef, report


def qr_solve(A: DesignMatrix, rhs: np.ndarray) -> tuple[np.ndarray, SolveReport]:
    """Direct least-squares solve through a thin QR factorization (oracle path)."""
    mat = A.to_dense()
    q, r = np.linalg.qr(mat, mode="reduced")
    coef = scipy.linalg.solve_triangular(r, q.conj().T @ rhs)
    res = rhs - mat @ coef
    bnorm = float(np.linalg.norm(rhs))
    rel = float(np.linalg.norm(res) / bnorm) if bnorm > 0 else 0.0
    return coef, SolveReport(0, rel, "direct_qr", True)


def _gram(A: DesignMatrix) -> np.ndarray:
    if A.storage == "sparse":
        g = (A.data.conj().T @ A.data).toarray()
    else:
        mat = A.to_dense()
        g = mat.conj().T @ mat
    return g / A.n


def _gram_operator(A: DesignMatrix, shift: float = 0.0) -> spla.LinearOperator:
    dt = np.dtype(A.dtype)

    def mv(v):
        return A.rmatvec(A.matvec(v)) / A.n - shift * v

    return spla.LinearOperator((A.M, A.M), matvec=mv, rmatvec=mv, dtype=dt)


def smallest_gram_eigenvalue(A: DesignMatrix) -> float:
    """``lambda_min((1/n) A^* A)``."""
    if A.M <= EIG_DENSE_LIMIT:
        return float(np.linalg.eigvalsh(_gram(A))[0])
    # Largest eigenvalue of (2 I - G) gives 2 - lambda_min for G with spectrum in [0, 2].
    top = spla.eigsh(_gram_operator(A), k=1, which="LA", tol=1e-8, return_eigenvectors=False)[0]
    shifted = _gram_operator(A, shift=float(top))
    low = spla.eigsh(shifted, k=1, which="LM", tol=1e-8, return_eigenvectors=False)[0]
    return float(low + top)


def gram_deviation(A: DesignMatrix) -> float:
    """Spectral norm ``||(1/n) A^* A - I||``."""
    if A.n < A.M:
        raise ValueError("gram deviation expects n >= M")
    if A.M <= EIG_DENSE_LIMIT:
        ev = np.linalg.eigvalsh(_gram(A))
        return float(max(abs(ev[0] - 1.0), abs(ev[-1] - 1.0)))
    val = spla.eigsh(_gram_operator(A, shift=1.0), k=1, which="LM", tol=1e-8, return_eigenvectors=False)[0]
    return float(abs(val))


def moore_penrose_norm(A: DesignMatrix) -> float:
    """``||(A^* A)^{-1} A^*|| = 1 / tau_min(A)``.

    Raises
    ------
    RankDeficiencyError
        If ``A`` is numerically rank deficient.
    """
    if A.M <= EIG_DENSE_LIMIT:
        sv = scipy.linalg.svdvals(A.to_dense() if A.storage != "sparse" else A.data.toarray())
        tau = float(sv[-1]) if sv.size else 0.0
    else:
        tau = float(np.sqrt(max(smallest_gram_eigenvalue(A), 0.0) * A.n))
    if tau <= np.sqrt(RANK_THRESHOLD * A.n):
        raise RankDeficiencyError("design matrix is rank deficient")
    return 1.0 / tau


@dataclass
class Approximant:
    """``S f = sum_k c_k eta_k`` over an index set."""

    family: BasisFamily
    index_set: object
    coefficients: np.ndarray
    report: SolveReport | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.coefficients = np.asarray(self.coefficients)
        if self.coefficients.shape != (len(self.index_set),):
            raise ValueError("coefficient length must equal the index-set size")

    def evaluate(self, points: np.ndarray, chunk: int = 20_000) -> np.ndarray:
        """Pointwise values at ``points`` (shape ``(n, d)``)."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.family.dim)
        if self.family.kind == "wavelet":
            from .wavelet import evaluate_wavelet_expansion

            return evaluate_wavelet_expansion(self, pts)
        out = []
        for start in range(0, pts.shape[0], chunk):
            out.append(eval_matrix(self.family, self.index_set, pts[start:start + chunk]) @ self.coefficients)
        return np.concatenate(out) if out else np.zeros(0, dtype=self.coefficients.dtype)


def _check_rank(A: DesignMatrix, report: SolveReport | None) -> None:
    if A.M <= EIG_DENSE_LIMIT and A.storage != "nufft":
        lam = smallest_gram_eigenvalue(A)
        if lam < RANK_THRESHOLD:
            raise RankDeficiencyError(f"smallest Gram eigenvalue {lam:.3e} below {RANK_THRESHOLD}")
    elif report is not None and report.reason in ("condition_limit", "condition_machine_precision"):
        raise RankDeficiencyError("LSQR reports a numerically singular design")


def _solve(A: DesignMatrix, rhs: np.ndarray, solver: str, tol: float, maxit: int):
    if solver == "qr":
        return qr_solve(A, rhs)
    if solver != "lsqr":
        raise ValueError(f"unknown solver {solver!r}")
    return lsqr_solve(A, rhs, tol, maxit)


def least_squares(nodes: NodeSet, samples: np.ndarray, family: BasisFamily, iset: IndexSet,
                  tol: float = DEFAULT_TOL, maxit: int = DEFAULT_MAXIT, solver: str = "lsqr",
                  check_rank: bool = True, storage: str = "auto") -> Approximant:
    """Unweighted least-squares fit of samples in the span of ``iset``.

    Raises
    ------
    RankDeficiencyError
        If the design is numerically rank deficient and ``check_rank`` is set.
    """
    samples = np.asarray(samples)
    if samples.shape != (nodes.n,):
        raise ValueError("sample count does not match nodes")
    A = assemble_design(family, iset, nodes, storage)
    coef, report = _solve(A, samples, solver, tol, maxit)
    if check_rank:
        _check_rank(A, report)
    return Approximant(family, iset, coef, report)


def reweighted_samples(nodes: NodeSet, samples: np.ndarray) -> np.ndarray:
    """``g_j = f(x^j) / sqrt(rho(x^j))``, zero where the density vanishes."""
    return np.asarray(samples) * _row_scale(nodes)


def weighted_least_squares(nodes: NodeSet, samples: np.ndarray, family: BasisFamily, iset: IndexSet,
                           tol: float = DEFAULT_TOL, maxit: int = DEFAULT_MAXIT, solver: str = "lsqr",
                           check_rank: bool = True, storage: str = "auto") -> Approximant:
    """Least squares on density-reweighted samples and rows."""
    samples = np.asarray(samples)
    if samples.shape != (nodes.n,):
        raise ValueError("sample count does not match nodes")
    A = assemble_weighted_design(family, iset, nodes, storage)
    coef, report = _solve(A, reweighted_samples(nodes, samples), solver, tol, maxit)
    if check_rank:
        _check_rank(A, report)
    return Approximant(family, iset, coef, report, {"weighted": True})


def save_approximant(approx: Approximant, index_path: str | Path, coef_path: str | Path) -> None:
    """Index file plus ``re,im`` coefficient CSV in set order."""
    save_index_set(approx.index_set, index_path)
    with open(coef_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["re", "im"])
        for c in approx.coefficients:
            writer.writerow([repr(float(np.real(c))), repr(float(np.imag(c)))])


def load_approximant(family: BasisFamily, index_path: str | Path, coef_path: str | Path,
                     rule: WeightRule | None = None) -> Approximant:
    """Inverse of :func:`save_approximant`."""
    iset = load_index_set(index_path, rule or WeightRule("plain"), family.nonnegative)
    with open(coef_path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        coef = np.array([complex(float(r[0]), float(r[1])) for r in reader if r])
    return Approximant(family, iset, coef)
