"""Explicit error bounds, parameter rules and a Monte-Carlo concentration harness.

The natural logarithm is used throughout.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse.linalg as spla

from .bases import SpectrumModel, legendre_eigenvalue, legendre_weighted_tail
from .index import WeightRule
from .leastsq import assemble_design, assemble_weighted_design, gram_deviation
from .sampling import RngStream, draw_importance, draw_uniform_torus, draw_chebyshev

__all__ = [
    "BoundReport",
    "BoundWarning",
    "ConcentrationReport",
    "rudelson_constant",
    "constant_individual",
    "constant_sampling_numbers",
    "spectral_function_N",
    "spectral_function_grid",
    "tail_T",
    "trace_sum",
    "max_m_for_n",
    "experiment_m",
    "oliveira_tail",
    "tail_energy_bound",
    "worstcase_bound",
    "preasymptotic_bound_pound",
    "preasymptotic_bound_krieg",
    "concentration_experiment",
    "write_concentration",
]

TAIL_TERMS = 1_000_000
TAIL_RELATIVE = 1e-4
TAIL_MAX_TERMS = 1_000_000_000
_CHUNK = 1_000_000


class BoundWarning(UserWarning):
    """A parameter rule produced a value outside its meaningful range."""


@dataclass(frozen=True)
class BoundReport:
    """Value of a bound with its inputs and validity flags."""

    value: float
    inputs: dict
    flags: dict = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return all(self.flags.values())


def rudelson_constant() -> float:
    """``C_R = sqrt(2) + 1 / (4 sqrt(2 log 8))``."""
    return math.sqrt(2.0) + 1.0 / (4.0 * math.sqrt(2.0 * math.log(8.0)))


def constant_individual() -> float:
    """``3 + 8 C_R^2 + 4 C_R`` (plain sampling, worst-case bound)."""
    c = rudelson_constant()
    return 3.0 + 8.0 * c * c + 4.0 * c


def constant_sampling_numbers() -> float:
    """``3 + 16 C_R^2 + 4 sqrt(2) C_R`` (importance sampling)."""
    c = rudelson_constant()
    return 3.0 + 16.0 * c * c + 4.0 * math.sqrt(2.0) * c


# --- spectral and tail functions --------------------------------------------------------------

def spectral_function_N(model: SpectrumModel, m: int) -> float:
    """``N(m) = sup_x sum_{k < m} |eta_k(x)|^2``.

    Fourier: ``m - 1``.  Legendre (``dx / 2`` normalization): ``sum_{deg < m-1} (2 deg + 1) = (m-1)^2``,
    attained at ``x = +-1``.
    """
    if m < 2:
        raise ValueError("N(m) needs m >= 2")
    if model.kind == "fourier":
        return float(m - 1)
    return float((m - 1) ** 2)


def spectral_function_grid(model: SpectrumModel, m: int, grid_size: int = 2001) -> tuple[float, int]:
    """Supremum of ``sum_{k < m} |eta_k|^2`` over a uniform grid; returns the value and grid size."""
    if m < 2:
        raise ValueError("N(m) needs m >= 2")
    from .bases import eval_matrix

    if model.kind == "fourier":
        axes = [np.linspace(0.0, 1.0, grid_size, endpoint=False)] * model.dim
    else:
        axes = [np.linspace(-1.0, 1.0, grid_size)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, model.dim)
    iset = model.index_set(m - 1)
    vals = np.sum(np.abs(eval_matrix(model.basis, iset, mesh)) ** 2, axis=1)
    return float(vals.max()), mesh.shape[0]


def _axis_terms(rule: WeightRule, start: int, stop: int) -> np.ndarray:
    t = np.arange(start, stop, dtype=float)
    return 1.0 / rule.factor(t) ** 2


def _axis_tail_integral(rule: WeightRule, K: int) -> float:
    """Upper bound of ``sum_{t > K} f(t)^(-2)`` by the integral from ``K``."""
    s = rule.s
    if rule.kind == "star":
        return (2.0 * math.pi) ** (-2.0 * s) * K ** (1.0 - 2.0 * s) / (2.0 * s - 1.0)
    return (1.0 + 2.0 * math.pi * K) ** (1.0 - 2.0 * s) / (2.0 * math.pi * (2.0 * s - 1.0))


def _summed(term_fn, tail_fn, first: int) -> tuple[float, float, int]:
    """``sum_{t >= first} term(t)`` truncated once the remainder is small enough."""
    parts: list[float] = []
    K = first
    target = max(TAIL_TERMS, first + 1)
    while True:
        while K < target:
            stop = min(K + _CHUNK, target)
            parts.append(math.fsum(term_fn(K, stop)))
            K = stop
        value = math.fsum(parts)
        rem = tail_fn(K - 1)
        if rem < TAIL_RELATIVE * value or K >= TAIL_MAX_TERMS:
            return value, rem, K - 1
        target = min(10 * target, TAIL_MAX_TERMS)


def _axis_sum(rule: WeightRule) -> tuple[float, float]:
    """``sum_{t in Z} f(t)^(-2)`` with an integral remainder."""
    if rule.kind not in ("star", "pound"):
        raise ValueError("tail sums need a star or pound weight rule")
    if rule.s <= 0.5:
        raise ValueError("the Fourier model is not square summable for s <= 1/2")
    val, rem, _ = _summed(lambda a, b: _axis_terms(rule, a, b), lambda K: _axis_tail_integral(rule, K), 1)
    return 1.0 + 2.0 * val, 2.0 * rem


def trace_sum(model: SpectrumModel) -> tuple[float, float]:
    """``sum_j sigma_j^2`` with a remainder; the truth lies in ``[value, value + remainder]``."""
    if model.kind == "fourier":
        s1, r1 = _axis_sum(model.rule)
        return s1 ** model.dim, (s1 + r1) ** model.dim - s1 ** model.dim
    if model.s <= 0.5:
        raise ValueError("the Legendre model is not summable for s <= 1/2")
    val, rem, _ = _summed(lambda a, b: legendre_eigenvalue(np.arange(a, b), model.s),
                          lambda K: float(K) ** (1.0 - 2.0 * model.s) / (2.0 * model.s - 1.0), 0)
    return val, rem


def tail_T(model: SpectrumModel, m: int) -> tuple[float, float]:
    """``T(m) = sup_x sum_{k >= m} |e_k(x)|^2`` with a certified remainder.

    Fourier: ``sum_{j >= m} sigma_j^2`` (every ``|eta_k| = 1``).
    Legendre: ``sum_{deg >= m-1} lambda_deg (2 deg + 1)`` (supremum at ``x = +-1``).
    The true value lies in ``[value, value + remainder]``.

    Raises
    ------
    ValueError
        If the model is not summable.
    """
    if m < 1:
        raise ValueError("T(m) needs m >= 1")
    if model.kind == "fourier":
        total, rem = trace_sum(model)
        head = 1.0 / model.index_set(m - 1).weights ** 2 if m > 1 else np.zeros(0)
        return max(total - math.fsum(head), 0.0), rem + 4 * np.finfo(float).eps * total
    s = model.s
    if s <= 1.0:
        raise ValueError("the Legendre tail function needs s > 1")

    def terms(a: int, b: int) -> np.ndarray:
        deg = np.arange(a, b, dtype=float)
        return legendre_eigenvalue(deg, s) * (2.0 * deg + 1.0)

    val, rem, _ = _summed(terms, lambda K: legendre_weighted_tail(s, K), m - 1)
    return val, rem


# --- parameter rules --------------------------------------------------------------------------

def _f1_budget(n: int, delta: float, denom: float) -> float:
    return n / (denom * (math.sqrt(2.0) * math.log(2.0 * n) - math.log(delta)))


def max_m_for_n(n: int, delta: float, denom: str = "c48", model: SpectrumModel | None = None) -> int:
    """Largest admissible ``m`` for ``n`` nodes and failure probability ``delta``.

    ``c48``: largest ``m`` with ``N(m) <= n / (48 (sqrt 2 log(2n) - log delta))``
    (``N(m) = m - 1`` unless a Legendre ``model`` is given).
    ``c96``: ``floor(n / (96 (sqrt 2 log(2n) - log delta)))``.
    A :class:`BoundWarning` is emitted when the result is below two.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if denom == "c96":
        m = int(math.floor(_f1_budget(n, delta, 96.0)))
    elif denom == "c48":
        budget = _f1_budget(n, delta, 48.0)
        if model is None or model.kind == "fourier":
            m = int(math.floor(budget)) + 1
        else:
            m = int(math.floor(math.sqrt(budget))) + 1
    else:
        raise ValueError(f"unknown denominator rule {denom!r}")
    if m < 2:
        warnings.warn(f"admissible m = {m} is below 2 for n = {n}", BoundWarning, stacklevel=2)
    return m


def experiment_m(n: int) -> int:
    """``floor(n / (4 log n))``."""
    if n < 3:
        raise ValueError("the experiment rule needs n >= 3")
    return int(math.floor(n / (4.0 * math.log(n))))


# --- bounds -----------------------------------------------------------------------------------

def oliveira_tail(n: int, N_m: float, t: float) -> float:
    """``(2n)^sqrt(2) exp(-n t^2 / (12 N(m)))``, the tail bound of ``P(||H_m - I|| > t)``."""
    if not 0.0 < t < 1.0:
        raise ValueError("t must lie in (0, 1)")
    if n < 1 or N_m <= 0:
        raise ValueError("need n >= 1 and N(m) > 0")
    return float(math.exp(math.sqrt(2.0) * math.log(2.0 * n) - n * t * t / (12.0 * N_m)))


def tail_energy_bound(n: int, sigma_m: float, T_m: float) -> float:
    """``n (sigma_m^2 + 4 C_R^2 log(8n) T / n + 2 C_R sigma_m sqrt(log(8n) T / n))``."""
    c = rudelson_constant()
    a = math.log(8.0 * n) / n * T_m
    return n * (sigma_m ** 2 + 4.0 * c * c * a + 2.0 * c * sigma_m * math.sqrt(a))


def worstcase_bound(n: int, delta: float, sigma_m: float, T_m: float, variant: str = "cor10") -> float:
    """``(C / delta) max(sigma_m^2, log(8n) T / n)`` for the squared worst-case error.

    ``variant='cor10'`` uses ``C = 3 + 8 C_R^2 + 4 C_R`` with ``T = T(m)``;
    ``variant='thm_sn'`` uses ``C = 3 + 16 C_R^2 + 4 sqrt(2) C_R`` and expects
    ``T_m`` to be the tail ``sum_{j >= m} sigma_j^2``.
    """
    if not 0.0 < delta < 1.0 / 3.0:
        raise ValueError("delta must lie in (0, 1/3)")
    if variant == "cor10":
        C = constant_individual()
    elif variant == "thm_sn":
        C = constant_sampling_numbers()
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return C / delta * max(sigma_m ** 2, math.log(8.0 * n) / n * T_m)


def preasymptotic_bound_pound(m: int | np.ndarray, s: float, d: int) -> float | np.ndarray:
    """``min(1, 16 / (3 m))^(s / (1 + log2 d))``."""
    mm = np.asarray(m, dtype=float)
    if np.any(mm < 1):
        raise ValueError("m must be at least 1")
    out = np.minimum(1.0, 16.0 / (3.0 * mm)) ** (s / (1.0 + math.log2(d)))
    return float(out) if np.ndim(m) == 0 else out


def preasymptotic_bound_krieg(m: int, s: float, d: int) -> BoundReport:
    """``(1.26 / m)^(1.83 s / (4 + log2 d))``, stated for ``2 <= m <= 3^d``."""
    if m < 1:
        raise ValueError("m must be at least 1")
    value = (1.26 / m) ** (1.83 * s / (4.0 + math.log2(d)))
    in_range = 2 <= m <= 3 ** d
    return BoundReport(value, {"m": m, "s": s, "d": d}, {"in_range": bool(in_range)})


# --- concentration harness --------------------------------------------------------------------

@dataclass
class ConcentrationReport:
    """Empirical Gram deviations against the tail bound, plus a truncated tail-energy estimate."""

    inputs: dict
    deviations: np.ndarray
    t_grid: np.ndarray
    empirical: np.ndarray
    bound: np.ndarray
    tail_energy: dict = field(default_factory=dict)

    def rows(self) -> list[tuple[float, float, float]]:
        return [(float(t), float(e), float(b)) for t, e, b in zip(self.t_grid, self.empirical, self.bound)]

    def summary(self) -> dict:
        return {
            "inputs": self.inputs,
            "trials": int(self.deviations.size),
            "max_deviation": float(self.deviations.max()) if self.deviations.size else None,
            "tail_energy": self.tail_energy,
        }


def _nodes(model: SpectrumModel, n: int, m: int, sampler: str, stream: RngStream):
    if sampler == "importance":
        return draw_importance(n, model, m, stream)
    if sampler != "plain":
        raise ValueError(f"unknown sampler {sampler!r}")
    if model.kind == "fourier":
        return draw_uniform_torus(n, model.dim, stream)
    return draw_chebyshev(n, 1, stream)


def _tail_energy(model: SpectrumModel, nodes, m: int, ratio: float, max_columns: int) -> tuple[float, int, float]:
    """``||Phi_m||^2`` with columns ``sigma_k eta_k`` for ``m <= k < J`` (density-weighted rows if present)."""
    from .bases import eval_matrix

    sig_m = float(model.singular_values(m)[-1])
    J = m
    size = m + 64
    while True:
        sig = model.singular_values(size)
        below = np.flatnonzero(sig[m - 1:] ** 2 < ratio * sig_m ** 2)
        if below.size:
            J = m - 1 + int(below[0])
            break
        if size >= m - 1 + max_columns:
            J = m - 1 + max_columns
            break
        size = min(2 * size, m - 1 + max_columns)
    iset = model.index_set(J)
    cols = np.arange(m - 1, J)
    pts = nodes.points
    mat = eval_matrix(model.basis, iset.indices[cols], pts) * sig[cols][None, :]
    if nodes.densities is not None:
        mat = mat / np.sqrt(np.where(nodes.densities > 0, nodes.densities, np.inf))[:, None]
    if mat.shape[1] == 0:
        return 0.0, 0, 0.0
    if min(mat.shape) <= 400:
        norm = float(np.linalg.norm(mat, 2))
    else:
        norm = float(spla.svds(mat, k=1, return_singular_vectors=False, random_state=0)[0])
    achieved = float(sig[J - 1] ** 2 / sig_m ** 2) if J > m - 1 else 1.0
    return norm * norm, J - (m - 1), achieved


def concentration_experiment(trials: int, n: int, model: SpectrumModel, m: int, sampler: str = "plain",
                             seed: int = 0, t_grid: Sequence[float] | None = None,
                             tail_energy: bool = False, truncation_ratio: float = 1e-6,
                             max_columns: int = 2000) -> ConcentrationReport:
    """Monte-Carlo estimate of ``P(||H_m - I|| > t)`` against :func:`oliveira_tail`.

    Trial ``i`` draws its nodes from ``RngStream(seed, i)``.  ``H_m`` uses the
    first ``m - 1`` eigenfunctions (density-weighted rows for ``sampler='importance'``).
    With ``tail_energy`` the mean of ``||Phi_m||^2`` is estimated on the columns
    ``sigma_k eta_k`` up to the first index with ``sigma^2 < truncation_ratio * sigma_m^2``
    (at most ``max_columns``); the truncation actually reached is reported.
    """
    grid = np.asarray(t_grid if t_grid is not None else np.linspace(0.05, 0.95, 19), dtype=float)
    inputs = {"trials": trials, "n": n, "m": m, "sampler": sampler, "seed": seed,
              "model": model.kind, "dim": model.dim,
              "rule": None if model.rule is None else {"kind": model.rule.kind, "s": model.rule.s},
              "s": model.s}
    if trials < 1:
        empty = np.zeros(0)
        return ConcentrationReport(inputs, empty, empty, empty, empty)
    if m < 2:
        raise ValueError("need m >= 2")
    iset = model.index_set(m - 1)
    devs = np.empty(trials)
    energies = []
    truncation = (0, 1.0)
    for i in range(trials):
        nodes = _nodes(model, n, m, sampler, RngStream(seed, i))
        if sampler == "importance":
            A = assemble_weighted_design(model.basis, iset, nodes, storage="dense")
        else:
            A = assemble_design(model.basis, iset, nodes, storage="dense")
        devs[i] = gram_deviation(A)
        if tail_energy:
            val, cols, achieved = _tail_energy(model, nodes, m, truncation_ratio, max_columns)
            energies.append(val)
            truncation = (cols, achieved)
    emp = np.array([np.count_nonzero(devs > t) / trials for t in grid])
    N_m = spectral_function_N(model, m)
    bnd = np.array([min(1.0, oliveira_tail(n, N_m, float(t))) for t in grid])
    energy = {}
    if tail_energy:
        sig_m = float(model.singular_values(m)[-1])
        T_m, T_rem = tail_T(model, m)
        energy = {
            "mean_norm_sq": math.fsum(energies) / trials,
            "bound": tail_energy_bound(n, sig_m, T_m + T_rem),
            "columns": int(truncation[0]),
            "truncation_ratio_reached": truncation[1],
            "truncation_ratio_requested": truncation_ratio,
        }
    return ConcentrationReport(inputs, devs, grid, emp, bnd, energy)


def write_concentration(report: ConcentrationReport, csv_path: str | Path, json_path: str | Path) -> None:
    """CSV rows ``t,empirical,bound`` and a JSON summary echoing all inputs."""
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "empirical", "bound"])
        for row in report.rows():
            writer.writerow([repr(v) for v in row])
    Path(json_path).write_text(json.dumps(report.summary(), indent=2, sort_keys=True) + "\n")
