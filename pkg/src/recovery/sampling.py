"""Seeded node generation: uniform torus, Chebyshev measure, importance density, boxes.

Every draw is a pure function of its arguments and an :class:`RngStream`
``(master_seed, stream_id)``.  Streams are counter-based Philox generators keyed
through :class:`numpy.random.SeedSequence`, so distinct streams can be used in
any order or in parallel without changing results.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .bases import (
    SpectrumModel,
    _legendre_values,
    legendre_eigenvalue,
    legendre_trace_tail,
    legendre_weighted_tail,
)

__all__ = [
    "RngStream",
    "NodeSet",
    "EnvelopeError",
    "draw_uniform_torus",
    "draw_chebyshev",
    "draw_uniform_box",
    "density_rho_m",
    "draw_importance",
    "default_truncation",
    "save_nodes",
    "load_nodes",
]

ENVELOPE = 3.0
"""Every normalized Legendre square is at most ``ENVELOPE`` times the Chebyshev density.

Bernstein's inequality gives ``(1 - x^2)^(1/4) |P_k(x)| <= sqrt(2 / (pi k))``, hence
``(2k + 1) P_k(x)^2 <= 3 * 2 / (pi sqrt(1 - x^2))`` for ``k >= 1``; the constant
function satisfies the same bound because ``6 / pi > 1``.
"""


class EnvelopeError(RuntimeError):
    """A rejection-sampling envelope failed to dominate the target density."""


@dataclass(frozen=True)
class RngStream:
    """Provenance of a random draw."""

    master_seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=int(self.master_seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.Philox(seq))

    def child(self, sub_id: int) -> "RngStream":
        """A derived stream, deterministic in ``sub_id``."""
        return RngStream(self.master_seed, int(self.stream_id) * 1_000_003 + int(sub_id) + 1)


@dataclass(frozen=True)
class NodeSet:
    """Sampling nodes with their generating measure and optional density values."""

    points: np.ndarray
    measure: str
    densities: np.ndarray | None = None
    provenance: RngStream | None = None
    box: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2:
            raise ValueError("points must be an (n, d) array")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.densities is not None:
            rho = np.asarray(self.densities, dtype=float).reshape(-1)
            if rho.shape[0] != pts.shape[0]:
                raise ValueError("densities do not match the number of points")
            if np.any(rho < 0):
                raise ValueError("densities must be nonnegative")
            rho.setflags(write=False)
            object.__setattr__(self, "densities", rho)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def draw_uniform_torus(n: int, d: int, stream: RngStream) -> NodeSet:
    """``n`` i.i.d. uniform points on ``[0, 1)^d``."""
    if n < 0 or d < 1:
        raise ValueError("need n >= 0 and d >= 1")
    pts = stream.generator().random((n, d))
    return NodeSet(pts, "uniform_torus", provenance=stream)


def draw_chebyshev(n: int, d: int, stream: RngStream) -> NodeSet:
    """``n`` i.i.d. points of the product arcsine law, ``x = cos(pi u)``."""
    if n < 0 or d < 1:
        raise ValueError("need n >= 0 and d >= 1")
    u = stream.generator().random((n, d))
    return NodeSet(np.cos(np.pi * u), "chebyshev", provenance=stream)


def draw_uniform_box(n: int, box: Sequence[tuple[float, float]], stream: RngStream) -> NodeSet:
    """``n`` i.i.d. uniform points on an axis-aligned box ``[(lo, hi), ...]``."""
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    if n < 0 or not box or any(hi <= lo for lo, hi in box):
        raise ValueError("need n >= 0 and a nondegenerate box")
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    pts = lo + (hi - lo) * stream.generator().random((n, len(box)))
    return NodeSet(pts, "uniform_box", provenance=stream, box=box)


def default_truncation(m: int) -> int:
    """Degree cut for the Legendre kernel diagonal: ``max(2000, 50 m)``."""
    return max(2000, 50 * int(m))


@dataclass(frozen=True)
class _LegendreParts:
    spectral: np.ndarray
    """``(m-1)^(-1) sum_{deg < m-1} eta^2``."""
    tail: np.ndarray
    """``(K - sum_{deg < m-1} lambda eta^2) / sum_{deg >= m-1} lambda``."""
    tolerance: float


def _legendre_parts(x: np.ndarray, s: float, m: int, trunc: int) -> _LegendreParts:
    spec = np.zeros_like(x)
    tail = np.zeros_like(x)
    for deg, col in enumerate(_legendre_values(x, trunc)):
        sq = col * col
        if deg < m - 1:
            spec += sq
        else:
            tail += legendre_eigenvalue(deg, s) * sq
    trace, trace_rem = legendre_trace_tail(s, m - 1, trunc)
    kernel_rem = legendre_weighted_tail(s, trunc)
    # value <= true tail numerator <= value + kernel_rem; trace in [trace, trace + trace_rem]
    tolerance = kernel_rem / trace + float(tail.max(initial=0.0)) * trace_rem / trace ** 2
    return _LegendreParts(spec / (m - 1), np.maximum(tail, 0.0) / trace, 0.5 * tolerance)


def density_rho_m(x: np.ndarray | Sequence[float] | float, model: SpectrumModel, m: int,
                  trunc: int | None = None, with_tolerance: bool = False):
    """Importance density mixing the first ``m-1`` squared eigenfunctions with the kernel tail.

    ``rho_m(x) = 1/2 [ (m-1)^(-1) sum_{j<m} |eta_j(x)|^2
                 + (sum_{j>=m} lambda_j)^(-1) (K(x,x) - sum_{j<m} lambda_j |eta_j(x)|^2) ]``.

    The density is relative to the model's base probability measure.  For the
    Fourier model it is identically one.

    Parameters
    ----------
    with_tolerance : bool
        Also return an absolute bound on the truncation error.
    """
    if m < 2:
        raise ValueError("importance density needs m >= 2")
    pts = np.asarray(x, dtype=float)
    scalar = pts.ndim == 0
    if model.kind == "fourier":
        shape = () if scalar else (pts.reshape(-1, model.dim).shape[0],)
        rho = np.ones(shape)
        tol = 0.0
    else:
        xs = np.atleast_1d(pts).reshape(-1)
        if np.any(np.abs(xs) > 1.0 + 1e-15):
            raise ValueError("point outside [-1, 1]")
        parts = _legendre_parts(np.clip(xs, -1.0, 1.0), model.s, m, trunc or default_truncation(m))
        rho = 0.5 * (parts.spectral + parts.tail)
        if not np.all(np.isfinite(rho)):
            raise FloatingPointError("nonfinite importance density")
        tol = parts.tolerance
        rho = float(rho[0]) if scalar else rho
    if scalar and not isinstance(rho, float):
        rho = float(rho)
    return (rho, tol) if with_tolerance else rho


def _chebyshev_density_half(x: np.ndarray) -> np.ndarray:
    """Arcsine density relative to ``dx / 2``: ``2 / (pi sqrt(1 - x^2))``."""
    return 2.0 / (np.pi * np.sqrt(np.maximum(1.0 - x * x, 0.0)))


def _legendre_single(x: np.ndarray, degrees: np.ndarray) -> np.ndarray:
    """``eta_{deg_i}(x_i)`` for paired arrays."""
    out = np.zeros_like(x)
    top = int(degrees.max(initial=0))
    for deg, col in enumerate(_legendre_values(x, top)):
        hit = degrees == deg
        out[hit] = col[hit]
    return out


def _rejection(count: int, rng: np.random.Generator, target, what: str) -> np.ndarray:
    """Draw ``count`` points with density ``target`` (relative to dx/2) under the arcsine envelope."""
    accepted: list[np.ndarray] = []
    need = count
    while need > 0:
        batch = max(64, int(need * ENVELOPE * 1.2))
        cand = np.cos(np.pi * rng.random(batch))
        u = rng.random(batch)
        env = ENVELOPE * _chebyshev_density_half(cand)
        val = target(cand)
        finite = np.isfinite(env)
        if np.any(val[finite] > env[finite] * (1.0 + 1e-9)):
            raise EnvelopeError(f"arcsine envelope does not dominate the {what} density")
        take = np.flatnonzero(u * env <= val)[:need]
        accepted.append(cand[take])
        need -= take.size
    return np.concatenate(accepted) if accepted else np.zeros(0)


def draw_importance(n: int, model: SpectrumModel, m: int, stream: RngStream,
                    trunc: int | None = None) -> NodeSet:
    """``n`` i.i.d. draws from the importance measure ``rho_m d(base)``.

    A fair coin selects the spectral branch (``j`` uniform in ``1..m-1``, then
    ``|eta_j|^2`` by rejection) or the tail branch (normalized kernel tail by
    rejection).  Both use the arcsine envelope ``ENVELOPE * chebyshev density``.
    For the Fourier model the density is identically one and the draw equals
    :func:`draw_uniform_torus` on the same stream.
    """
    if m < 2:
        raise ValueError("importance sampling needs m >= 2")
    if n < 0:
        raise ValueError("n must be nonnegative")
    if model.kind == "fourier":
        base = draw_uniform_torus(n, model.dim, stream)
        return NodeSet(base.points, f"importance({m})", np.ones(n), stream)
    trunc = trunc or default_truncation(m)
    rng = stream.generator()
    points = np.empty(n)
    filled = np.zeros(n, dtype=bool)
    while not filled.all():
        todo = np.flatnonzero(~filled)
        branch = rng.random(todo.size) < 0.5
        spectral_slots = todo[branch]
        tail_slots = todo[~branch]
        degrees = rng.integers(0, m - 1, size=spectral_slots.size)
        order = np.argsort(degrees, kind="stable")
        spectral_slots, degrees = spectral_slots[order], degrees[order]
        for deg in np.unique(degrees):
            slots = spectral_slots[degrees == deg]
            pts = _rejection(slots.size, rng,
                             lambda c, d=int(deg): _legendre_single(c, np.full(c.shape, d)) ** 2,
                             "spectral")
            points[slots] = pts
        if tail_slots.size:
            pts = _rejection(tail_slots.size, rng,
                             lambda c: _legendre_parts(c, model.s, m, trunc).tail, "tail")
            points[tail_slots] = pts
        filled[todo] = True
        rho = density_rho_m(points[todo], model, m, trunc)
        zero = todo[rho <= 0.0]
        filled[zero] = False
    rho = density_rho_m(points, model, m, trunc)
    return NodeSet(points[:, None], f"importance({m})", rho, stream)


def save_nodes(nodes: NodeSet, path: str | Path) -> None:
    """CSV with header ``x1,...,xd[,rho]`` and one point per row."""
    header = [f"x{i + 1}" for i in range(nodes.dim)]
    rows = nodes.points
    if nodes.densities is not None:
        header.append("rho")
        rows = np.column_stack([rows, nodes.densities])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


def load_nodes(path: str | Path, measure: str = "external") -> NodeSet:
    """Read a node CSV (such as externally generated lattices)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(v) for v in row] for row in reader if row]
    cols = [h.strip() for h in header]
    has_rho = cols[-1] == "rho"
    d = len(cols) - int(has_rho)
    if d < 1 or any(c != f"x{i + 1}" for i, c in enumerate(cols[:d])):
        raise ValueError(f"malformed node header {header!r}")
    arr = np.asarray(data, dtype=float).reshape(-1, len(cols))
    return NodeSet(arr[:, :d], measure, arr[:, d] if has_rho else None)

