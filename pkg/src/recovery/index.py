"""Multi-index weights, hyperbolic-cross index sets and singular values.

A hyperbolic cross of size ``M`` is the list of the ``M`` multi-indices with
the smallest tensor-product weight.  Ties are broken lexicographically in
numeric order, first component outermost.

The enumeration never scans a full box.  Every per-axis weight factor is at
least one and nondecreasing in ``|k_i|``, so all indices whose weight does not
exceed a threshold ``W`` can be listed coordinate by coordinate with the
remaining budget ``W / (partial product)``.  The threshold is doubled until at
least ``M`` indices lie below it, which makes the result provably complete.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "WeightRule",
    "IndexSet",
    "IndexBudgetError",
    "axis_weight",
    "weight",
    "weights",
    "hyperbolic_cross",
    "singular_values",
    "save_index_set",
    "load_index_set",
]

_KINDS = ("star", "pound", "plain")
DEFAULT_MEMORY_BUDGET = 50_000_000
"""Maximum number of candidate indices materialized during enumeration."""


class IndexBudgetError(MemoryError):
    """Raised when an enumeration would exceed the configured candidate budget."""


@dataclass(frozen=True)
class WeightRule:
    """Tensor-product weight ``w(k) = prod_i f(|k_i|)``.

    Parameters
    ----------
    kind : {"star", "pound", "plain"}
        ``star``: ``f(t) = (1 + (2 pi t)^(2s))^(1/2)``;
        ``pound``: ``f(t) = (1 + 2 pi t)^s``;
        ``plain``: ``f(t) = (1 + t^2)^(1/2)``.
    s : float
        Smoothness, required positive for ``star`` and ``pound``.
    """

    kind: str = "plain"
    s: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown weight rule {self.kind!r}")
        if self.kind != "plain" and not self.s > 0:
            raise ValueError("smoothness s must be positive for star/pound weights")

    def factor(self, t: np.ndarray) -> np.ndarray:
        """Univariate factor ``f(|t|)`` evaluated elementwise."""
        t = np.abs(np.asarray(t, dtype=float))
        if self.kind == "star":
            return np.sqrt(1.0 + (2.0 * np.pi * t) ** (2.0 * self.s))
        if self.kind == "pound":
            return (1.0 + 2.0 * np.pi * t) ** self.s
        return np.sqrt(1.0 + t * t)

    def radius(self, budget: np.ndarray) -> np.ndarray:
        """Largest ``|t|`` (real) with ``f(t) <= budget``; negative if none."""
        b = np.asarray(budget, dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            if self.kind == "star":
                r = np.power(np.maximum(b * b - 1.0, 0.0), 1.0 / (2.0 * self.s)) / (2.0 * np.pi)
            elif self.kind == "pound":
                r = (np.power(b, 1.0 / self.s) - 1.0) / (2.0 * np.pi)
            else:
                r = np.sqrt(np.maximum(b * b - 1.0, 0.0))
        return np.where(b >= 1.0, r, -1.0)


@dataclass(frozen=True)
class IndexSet:
    """Ordered multi-indices with their nondecreasing weights.

    ``nonnegative`` marks the cosine (Chebyshev) mode where indices live in
    ``N_0^d`` instead of ``Z^d``.
    """

    dim: int
    rule: WeightRule
    indices: np.ndarray
    weights: np.ndarray
    nonnegative: bool = False
    _lookup: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1, self.dim)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if idx.shape[0] != w.shape[0]:
            raise ValueError("indices and weights differ in length")
        idx.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.indices.shape[0]

    @property
    def max_abs(self) -> int:
        """Largest absolute component over the whole set (0 for an empty set)."""
        return int(np.abs(self.indices).max()) if len(self) else 0

    def position(self, k: Sequence[int]) -> int:
        """Position of ``k`` in the set order; ``KeyError`` if absent."""
        if self._lookup is None:
            object.__setattr__(
                self, "_lookup", {tuple(map(int, row)): j for j, row in enumerate(self.indices)}
            )
        return self._lookup[tuple(int(c) for c in k)]

    def prefix(self, size: int) -> "IndexSet":
        """The first ``size`` indices, which form the hyperbolic cross of that size."""
        return IndexSet(self.dim, self.rule, self.indices[:size], self.weights[:size], self.nonnegative)


def axis_weight(t: int | float, rule: WeightRule) -> float:
    """Univariate weight factor for one component."""
    return float(rule.factor(np.asarray([t]))[0])


def weights(indices: np.ndarray, rule: WeightRule) -> np.ndarray:
    """Vectorized tensor weights for an ``(N, d)`` array of indices.

    Factors are multiplied in sorted order so that permuted indices obtain
    bit-identical weights, which keeps tie-breaking exact.
    """
    idx = np.atleast_2d(np.asarray(indices))
    exact = _plain_square(idx, rule)
    if exact is not None:
        return np.sqrt(exact.astype(float))
    f = np.sort(rule.factor(idx), axis=1)
    out = np.ones(idx.shape[0])
    for col in range(idx.shape[1]):
        out = out * f[:, col]
    return out


def _plain_square(idx: np.ndarray, rule: WeightRule) -> np.ndarray | None:
    """Exact integer ``w(k)^2`` for the plain rule when it fits into int64."""
    if rule.kind != "plain" or not idx.size:
        return None
    top = int(np.abs(idx).max())
    if idx.shape[1] * math.log2(1 + top * top) >= 62:
        return None
    return np.prod(1 + idx.astype(np.int64) ** 2, axis=1)


def weight(k: Sequence[int], rule: WeightRule, dim: int | None = None) -> float:
    """Weight of a single multi-index.

    Raises
    ------
    ValueError
        If ``dim`` is given and does not match ``len(k)``.
    """
    k = tuple(k)
    if dim is not None and len(k) != dim:
        raise ValueError(f"index of length {len(k)} does not match dimension {dim}")
    if not k:
        raise ValueError("empty multi-index")
    return float(weights(np.asarray([k]), rule)[0])


def _enumerate_below(dim: int, threshold: float, rule: WeightRule, nonnegative: bool,
                     budget: int) -> np.ndarray:
    """All indices with weight <= threshold (with a tiny relative slack)."""
    slack = 1.0 + 1e-12
    prefixes = np.zeros((1, 0), dtype=np.int64)
    remaining = np.array([threshold * slack])
    for _ in range(dim):
        r = np.floor(rule.radius(remaining) + 1e-9).astype(np.int64)
        keep = r >= 0
        prefixes, remaining, r = prefixes[keep], remaining[keep], r[keep]
        counts = r + 1 if nonnegative else 2 * r + 1
        total = int(counts.sum())
        if total > budget:
            raise IndexBudgetError(
                f"hyperbolic-cross enumeration needs {total} candidates (budget {budget})"
            )
        rep = np.repeat(np.arange(len(counts)), counts)
        starts = np.cumsum(counts) - counts
        offset = np.arange(total) - np.repeat(starts, counts)
        comp = offset if nonnegative else offset - np.repeat(r, counts)
        prefixes = np.concatenate([prefixes[rep], comp[:, None]], axis=1)
        remaining = remaining[rep] / rule.factor(comp)
    return prefixes


def _sorted(idx: np.ndarray, rule: WeightRule) -> tuple[np.ndarray, np.ndarray]:
    w = weights(idx, rule) if len(idx) else np.zeros(0)
    exact = _plain_square(idx, rule)
    primary = w if exact is None else exact
    keys = tuple(idx[:, c] for c in range(idx.shape[1] - 1, -1, -1)) + (primary,)
    order = np.lexsort(keys)
    return idx[order], w[order]


def hyperbolic_cross(d: int, M: int, rule: WeightRule, nonnegative: bool = False,
                     budget: int = DEFAULT_MEMORY_BUDGET) -> IndexSet:
    """The ``M`` indices of smallest weight, ordered by weight then lexicographically.

    Parameters
    ----------
    d : int
        Spatial dimension.
    M : int
        Set size, at least one.
    rule : WeightRule
        Weight used for the ordering.
    nonnegative : bool
        Restrict to ``N_0^d`` (cosine / Chebyshev mode).
    budget : int
        Maximum number of candidates materialized; exceeding it raises
        :class:`IndexBudgetError`.
    """
    if d < 1:
        raise ValueError("dimension must be at least 1")
    if M < 1:
        raise ValueError("set size M must be at least 1")
    threshold = 2.0
    while True:
        cand = _enumerate_below(d, threshold, rule, nonnegative, budget)
        # Only indices at or below the threshold are guaranteed complete.
        if int(np.count_nonzero(weights(cand, rule) <= threshold)) >= M:
            break
        threshold *= 2.0
    idx, w = _sorted(cand, rule)
    return IndexSet(d, rule, idx[:M], w[:M], nonnegative)


def singular_values(d: int, rule: WeightRule, M: int) -> np.ndarray:
    """Nonincreasing rearrangement ``sigma_j = 1 / w(k_j)`` for ``j = 1..M``."""
    if rule.kind not in ("star", "pound"):
        raise ValueError("singular values are defined for star and pound weights")
    return 1.0 / hyperbolic_cross(d, M, rule).weights


def save_index_set(iset: IndexSet, path: str | Path) -> None:
    """Write one index per line, components separated by single spaces."""
    lines = (" ".join(str(int(c)) for c in row) for row in iset.indices)
    Path(path).write_text("\n".join(lines) + ("\n" if len(iset) else ""))


def load_index_set(path: str | Path, rule: WeightRule, nonnegative: bool = False) -> IndexSet:
    """Read an index file written by :func:`save_index_set` (order preserved)."""
    rows: list[list[int]] = [
        [int(tok) for tok in line.split()] for line in Path(path).read_text().splitlines() if line.strip()
    ]
    if not rows:
        raise ValueError("empty index file")
    d = len(rows[0])
    if any(len(r) != d for r in rows):
        raise ValueError("inconsistent index dimension in file")
    idx = np.asarray(rows, dtype=np.int64)
    return IndexSet(d, rule, idx, weights(idx, rule), nonnegative)
