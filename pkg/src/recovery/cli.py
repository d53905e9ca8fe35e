"""Batch experiment runner emitting deterministic CSV plot data.

Every subcommand writes one CSV with the header::

    experiment,fn,d,n,m,seed,metric,value,remainder,iters,wall_ms

plus ``<out>.summary.json`` with the resolved configuration and aggregated
comparisons.  Settings come from an optional flat ``key = value`` file
(``--config``) and are overridden by command-line flags.

Exit codes: ``0`` success (failed runs appear as flagged rows), ``2`` invalid
configuration, ``3`` input/output failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bounds
from .bases import BasisFamily, SpectrumModel, eval_matrix
from .index import WeightRule, hyperbolic_cross
from .leastsq import (
    DEFAULT_MAXIT,
    DEFAULT_TOL,
    EIG_DENSE_LIMIT,
    assemble_design,
    gram_deviation,
    least_squares,
    weighted_least_squares,
)
from .quadrature import basis_integrals, cubature_weights, integrate
from .sampling import NodeSet, RngStream, draw_chebyshev, draw_importance, draw_uniform_torus, load_nodes
from .testfns import FUNCTION_IDS, TestFunction, exact_integral, projection_error, recovery_error

__all__ = ["ExperimentConfig", "ConfigError", "HEADER", "main", "run", "parse_config_file"]

HEADER = ["experiment", "fn", "d", "n", "m", "seed", "metric", "value", "remainder", "iters", "wall_ms"]
KINDS = ("recover", "recover_weighted", "integrate", "spectra", "concentration", "wavelet")
M_RULES = ("paper_4logn", "f1", "choice_m2", "explicit")
EXTRA_FUNCTIONS = ("legendre_span",)
LEGENDRE_SPAN_TERMS = 30
EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


class ConfigError(ValueError):
    """Invalid experiment configuration (exit code 2)."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved settings of one batch run.

    ``m_explicit`` pairs with ``n_grid`` entry by entry.  Wavelet runs iterate
    over ``levels`` and derive ``n`` from ``oversampling`` instead of ``n_grid``.
    """

    kind: str
    fn: str = "torus_kink"
    d: int = 2
    n_grid: tuple[int, ...] = (1000,)
    delta: float = 0.01
    m_rule: str = "paper_4logn"
    m_explicit: tuple[int, ...] = ()
    seeds: tuple[int, ...] = (0,)
    tol: float = DEFAULT_TOL
    maxit: int = DEFAULT_MAXIT
    out: str = "results.csv"
    nodes_file: str | None = None
    s: float = 1.0
    weight: str = "star"
    trials: int = 100
    levels: tuple[int, ...] = (3, 4, 5, 6)
    wavelet: str = "db3"
    oversampling: float = 50.0
    m_max: int = 10_000
    record_time: bool = False
    jobs: int = 1
    gram: bool = False

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment {self.kind!r}")
        if self.m_rule not in M_RULES:
            raise ConfigError(f"unknown m-rule {self.m_rule!r}")
        if self.d < 1:
            raise ConfigError("d must be positive")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ConfigError("the n-grid must be strictly increasing")
        if not self.n_grid and self.kind not in ("spectra", "wavelet"):
            raise ConfigError("the n-grid must be nonempty")
        if any(n < 3 for n in self.n_grid):
            raise ConfigError("every n must be at least 3")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
        if self.m_rule == "explicit" and len(self.m_explicit) != max(len(self.n_grid), 1):
            raise ConfigError("an explicit m-rule needs one m per grid entry")
        if self.tol <= 0 or self.maxit < 1 or self.jobs < 1 or self.trials < 0:
            raise ConfigError("tol, maxit, jobs must be positive and trials nonnegative")
        if self.kind in ("recover", "recover_weighted", "integrate") and self.fn not in FUNCTION_IDS + EXTRA_FUNCTIONS:
            raise ConfigError(f"unknown test function {self.fn!r}")
        if self.fn == "legendre_span" and (self.kind != "recover_weighted" or self.d != 1):
            raise ConfigError("legendre_span is a univariate recover-weighted function")
        if self.kind == "wavelet" and (not self.levels or any(l < 0 for l in self.levels)):
            raise ConfigError("wavelet runs need nonnegative levels")
        if self.weight not in ("star", "pound"):
            raise ConfigError("weight must be star or pound")
        _wavelet_spec(self.wavelet)


# --- parsing ----------------------------------------------------------------------------------

def _int_token(tok: str) -> int:
    val = float(tok)
    if not val.is_integer():
        raise ConfigError(f"{tok!r} is not an integer")
    return int(val)


def _int_list(text: str) -> tuple[int, ...]:
    """``"1,2,5"``, ``"1e3,1e4"`` or an inclusive range ``"0-9"``."""
    out: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        span = re.fullmatch(r"(\d+)-(\d+)", part)
        if span:
            out.extend(range(int(span.group(1)), int(span.group(2)) + 1))
        else:
            out.append(_int_token(part))
    return tuple(out)


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment; keys use underscores or dashes."""
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (t.strip() for t in line.split("=", 1))
        entries[key.replace("-", "_")] = value
    return entries


_CONVERTERS = {
    "fn": str, "d": _int_token, "n_grid": _int_list, "n": _int_list, "delta": float, "m_rule": str,
    "m_explicit": _int_list, "m": _int_list, "seeds": _int_list, "tol": float, "maxit": _int_token,
    "out": str, "nodes_file": str, "s": float, "weight": str, "trials": _int_token, "levels": _int_list,
    "wavelet": str, "oversampling": float, "m_max": _int_token, "jobs": _int_token,
    "record_time": lambda v: str(v).lower() in ("1", "true", "yes", "on"),
    "gram": lambda v: str(v).lower() in ("1", "true", "yes", "on"),
}
_ALIASES = {"n": "n_grid", "m": "m_explicit"}


def _apply(values: dict, raw: dict) -> dict:
    for key, value in raw.items():
        if value is None:
            continue
        if key not in _CONVERTERS:
            raise ConfigError(f"unknown setting {key!r}")
        try:
            conv = _CONVERTERS[key](value) if isinstance(value, str) else value
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc
        values[_ALIASES.get(key, key)] = conv
    return values


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recovery", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="kind", required=True)
    for name in KINDS:
        p = sub.add_parser(name.replace("_", "-"))
        p.add_argument("--config", help="flat key = value settings file")
        p.add_argument("--fn")
        p.add_argument("--d")
        p.add_argument("--n", help="comma-separated, strictly increasing sample counts")
        p.add_argument("--delta")
        p.add_argument("--m-rule", choices=M_RULES)
        p.add_argument("--m", help="explicit m per n (with --m-rule explicit)")
        p.add_argument("--seeds", help="comma list or inclusive range such as 0-9")
        p.add_argument("--tol")
        p.add_argument("--maxit")
        p.add_argument("--nodes-file")
        p.add_argument("--out")
        p.add_argument("--s", help="smoothness for spectra, concentration and Legendre runs")
        p.add_argument("--weight", help="star or pound")
        p.add_argument("--trials")
        p.add_argument("--levels", help="wavelet level budgets")
        p.add_argument("--wavelet", help="haar or dbN")
        p.add_argument("--oversampling", help="wavelet samples per |I| log |I|")
        p.add_argument("--m-max")
        p.add_argument("--jobs")
        p.add_argument("--gram", action="store_true", default=None, help="also emit Gram diagnostics")
        p.add_argument("--record-time", action="store_true", default=None,
                       help="fill wall_ms (output is then no longer byte-reproducible)")
    return parser


def build_config(argv: Sequence[str] | None = None) -> ExperimentConfig:
    args = _parser().parse_args(argv)
    kind = args.kind.replace("-", "_")
    values: dict = {}
    if args.config:
        try:
            _apply(values, parse_config_file(args.config))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    cli = {k: v for k, v in vars(args).items() if k not in ("kind", "config")}
    _apply(values, cli)
    cfg = ExperimentConfig(kind=kind, **values)
    cfg.validate()
    return cfg


# --- helpers ----------------------------------------------------------------------------------

def _wavelet_spec(name: str):
    from .wavelet import WaveletSpec

    name = name.lower()
    if name == "haar":
        return WaveletSpec.haar()
    if name.startswith("db") and name[2:].isdigit() and int(name[2:]) >= 1:
        return WaveletSpec.daubechies(int(name[2:]))
    raise ConfigError(f"unknown wavelet {name!r}")


def rule_m(cfg: ExperimentConfig, n: int, position: int) -> int:
    """The ``m`` of the configured rule at grid position ``position``."""
    if cfg.m_rule == "paper_4logn":
        return bounds.experiment_m(n)
    if cfg.m_rule == "explicit":
        return cfg.m_explicit[position]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", bounds.BoundWarning)
        model = _legendre_model(cfg) if cfg.fn == "legendre_span" else None
        return bounds.max_m_for_n(n, cfg.delta, "c48" if cfg.m_rule == "f1" else "c96", model)


def index_size(cfg: ExperimentConfig, m: int) -> int:
    """Number of basis functions used for rule value ``m``.

    The sample-count rules ``f1`` and ``choice_m2`` (and every weighted run)
    use the first ``m - 1`` functions; ``paper_4logn`` and ``explicit`` use ``m``.
    """
    if cfg.kind == "recover_weighted" or cfg.m_rule in ("f1", "choice_m2"):
        return m - 1
    return m


def _legendre_model(cfg: ExperimentConfig) -> SpectrumModel:
    return SpectrumModel("legendre", 1, s=cfg.s)


def _fourier_model(cfg: ExperimentConfig) -> SpectrumModel:
    return SpectrumModel("fourier", cfg.d, WeightRule(cfg.weight, cfg.s))


def _setting(fn: str, d: int):
    """Basis family, node sampler and index-set orientation for a test function."""
    if fn.startswith("cube"):
        return BasisFamily("chebyshev", d), draw_chebyshev, True
    return BasisFamily("fourier", d), draw_uniform_torus, False


def _external_nodes(cfg: ExperimentConfig) -> NodeSet | None:
    if cfg.nodes_file is None:
        return None
    try:
        nodes = load_nodes(cfg.nodes_file)
    except ValueError as exc:
        raise ConfigError(f"malformed node file: {exc}") from exc
    if nodes.dim != cfg.d:
        raise ConfigError(f"node file has dimension {nodes.dim}, expected {cfg.d}")
    return nodes


def _fmt(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


@dataclass
class _Row:
    experiment: str
    fn: str
    d: int
    n: int | None
    m: int | None
    seed: int | None
    metric: str
    value: float
    remainder: float | None = None
    iters: int | None = None
    wall_ms: float | None = None

    def key(self):
        return (self.n if self.n is not None else -1, self.m if self.m is not None else -1,
                self.metric, self.seed if self.seed is not None else -1)

    def cells(self, record_time: bool) -> list[str]:
        return [self.experiment, self.fn, str(self.d), _fmt(self.n), _fmt(self.m), _fmt(self.seed),
                self.metric, _fmt(self.value), _fmt(self.remainder), _fmt(self.iters),
                _fmt(self.wall_ms) if record_time else ""]


def _failure(cfg: ExperimentConfig, n, m, seed, exc: Exception, start: float) -> _Row:
    return _Row(cfg.kind, cfg.fn, cfg.d, n, m, seed, f"failure:{type(exc).__name__}", float("nan"),
                wall_ms=1e3 * (time.perf_counter() - start))


# --- tasks ------------------------------------------------------------------------------------

def _legendre_span_coefficients(cfg: ExperimentConfig, seed: int) -> np.ndarray:
    sig = _legendre_model(cfg).singular_values(LEGENDRE_SPAN_TERMS)
    signs = RngStream(seed, 7_000_001).generator().choice([-1.0, 1.0], size=LEGENDRE_SPAN_TERMS)
    return sig * signs


def _legendre_span_task(cfg: ExperimentConfig, n: int, m: int, seed: int) -> list[_Row]:
    start = time.perf_counter()
    model = _legendre_model(cfg)
    coef = _legendre_span_coefficients(cfg, seed)
    size = m - 1
    nodes = _external_nodes(cfg) or draw_importance(n, model, m, RngStream(seed, n))
    if nodes.densities is None:
        raise ConfigError("external nodes for weighted runs need a rho column")
    deg = np.arange(LEGENDRE_SPAN_TERMS)[:, None]
    y = eval_matrix(model.basis, deg, nodes.points) @ coef
    approx = weighted_least_squares(nodes, y, model.basis, model.index_set(size), cfg.tol, cfg.maxit)
    top = max(size, LEGENDRE_SPAN_TERMS)
    diff = np.zeros(top)
    diff[:LEGENDRE_SPAN_TERMS] += coef
    diff[:size] -= approx.coefficients
    err = math.sqrt(math.fsum(diff ** 2))
    sigma_m = float(model.singular_values(m)[-1])
    wall = 1e3 * (time.perf_counter() - start)
    return [
        _Row(cfg.kind, cfg.fn, 1, nodes.n, m, seed, "l2_error", err, 0.0, approx.report.iterations, wall),
        _Row(cfg.kind, cfg.fn, 1, nodes.n, m, seed, "sigma_m", sigma_m, 0.0),
    ]


def _recover_task(cfg: ExperimentConfig, n: int, m: int, seed: int) -> list[_Row]:
    if cfg.fn == "legendre_span":
        return _legendre_span_task(cfg, n, m, seed)
    start = time.perf_counter()
    family, sampler, nonneg = _setting(cfg.fn, cfg.d)
    f = TestFunction(cfg.fn, cfg.d)
    iset = hyperbolic_cross(cfg.d, index_size(cfg, m), WeightRule("plain"), nonnegative=nonneg)
    nodes = _external_nodes(cfg)
    if nodes is None:
        nodes = sampler(n, cfg.d, RngStream(seed, n))
        if cfg.kind == "recover_weighted":
            if family.kind != "fourier":
                raise ConfigError("recover-weighted supports Fourier test functions and legendre_span")
            nodes = draw_importance(n, _fourier_model(cfg), m, RngStream(seed, n))
    y = f.eval(nodes.points)
    if cfg.kind == "recover_weighted":
        if nodes.densities is None:
            raise ConfigError("external nodes for weighted runs need a rho column")
        approx = weighted_least_squares(nodes, y, family, iset, cfg.tol, cfg.maxit)
    else:
        approx = least_squares(nodes, y, family, iset, cfg.tol, cfg.maxit)
    err, rem = recovery_error(f, approx)
    rows = [_Row(cfg.kind, cfg.fn, cfg.d, nodes.n, m, seed, "sampling_error", err, rem,
                 approx.report.iterations, 1e3 * (time.perf_counter() - start))]
    if cfg.gram and len(iset) <= EIG_DENSE_LIMIT:
        A = assemble_design(family, iset, nodes, storage="dense")
        rows.append(_Row(cfg.kind, cfg.fn, cfg.d, nodes.n, m, seed, "gram_deviation", gram_deviation(A), 0.0))
    return rows


def _approximation_task(cfg: ExperimentConfig, n: int, m: int, seed: int | None) -> list[_Row]:
    start = time.perf_counter()
    _, _, nonneg = _setting(cfg.fn, cfg.d)
    f = TestFunction(cfg.fn, cfg.d)
    iset = hyperbolic_cross(cfg.d, index_size(cfg, m), WeightRule("plain"), nonnegative=nonneg)
    val, rem = projection_error(f, iset)
    return [_Row(cfg.kind, cfg.fn, cfg.d, n, m, None, "approximation_error", val, rem,
                 wall_ms=1e3 * (time.perf_counter() - start))]


def _integrate_task(cfg: ExperimentConfig, n: int, m: int, seed: int) -> list[_Row]:
    start = time.perf_counter()
    family, sampler, nonneg = _setting(cfg.fn, cfg.d)
    f = TestFunction(cfg.fn, cfg.d)
    iset = hyperbolic_cross(cfg.d, index_size(cfg, m), WeightRule("plain"), nonnegative=nonneg)
    nodes = _external_nodes(cfg) or sampler(n, cfg.d, RngStream(seed, n))
    measure = "cube" if family.kind == "chebyshev" else "torus"
    A = assemble_design(family, iset, nodes)
    rule = cubature_weights(A, basis_integrals(family, iset, measure), nodes, measure)
    exact, exact_err = exact_integral(f)
    err = abs(integrate(rule, f.eval(nodes.points)) - exact)
    return [_Row(cfg.kind, cfg.fn, cfg.d, nodes.n, m, seed, "integration_error", err, exact_err,
                 None, 1e3 * (time.perf_counter() - start))]


def _wavelet_task(cfg: ExperimentConfig, level: int, seed: int) -> list[_Row]:
    from .wavelet import (
        assemble_sparse_design,
        build_wavelet_index_set,
        draw_extended_domain,
        hyperbolic_wavelet_regression,
        l2_error_unit_cube,
    )

    start = time.perf_counter()
    spec = _wavelet_spec(cfg.wavelet)
    f = TestFunction(cfg.fn, cfg.d)
    size = len(build_wavelet_index_set(cfg.d, level, spec))
    n = int(math.ceil(cfg.oversampling * size * math.log(max(size, 2))))
    nodes = _external_nodes(cfg) or draw_extended_domain(n, cfg.d, level, spec, RngStream(seed, level))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        approx = hyperbolic_wavelet_regression(nodes, f.eval(nodes.points), level, spec, cfg.tol, cfg.maxit)
    err, gap = l2_error_unit_cube(f.eval, approx, seed=seed)
    rows = [_Row(cfg.kind, cfg.fn, cfg.d, nodes.n, size, seed, "l2_error", err, gap,
                 approx.report.iterations, 1e3 * (time.perf_counter() - start))]
    if cfg.gram:
        A = assemble_sparse_design(nodes, approx.index_set, spec)
        rows.append(_Row(cfg.kind, cfg.fn, cfg.d, nodes.n, size, seed, "gram_deviation", gram_deviation(A), 0.0))
    return rows


def _concentration_task(cfg: ExperimentConfig, n: int, m: int, seed: int) -> list[_Row]:
    model = _fourier_model(cfg)
    report = bounds.concentration_experiment(cfg.trials, n, model, m, "plain", seed)
    out_csv, out_json = _side_paths(cfg, f"concentration_n{n}_m{m}")
    bounds.write_concentration(report, out_csv, out_json)
    rows = []
    for t, emp, bnd in report.rows():
        margin = 3.0 * math.sqrt(emp * (1.0 - emp) / cfg.trials) if cfg.trials else 0.0
        rows.append(_Row(cfg.kind, "fourier", cfg.d, n, m, seed, f"failure_rate[t={t:.2f}]", emp, margin))
        rows.append(_Row(cfg.kind, "fourier", cfg.d, n, m, seed, f"oliveira_bound[t={t:.2f}]", bnd, 0.0))
    return rows


def _call(task):
    """Run one task; numerical failures become a flagged row instead of aborting the batch."""
    fn, cfg, args, ident = task
    start = time.perf_counter()
    try:
        return fn(cfg, *args)
    except (ConfigError, OSError):
        raise
    except (ArithmeticError, ValueError, np.linalg.LinAlgError, MemoryError, RuntimeError) as exc:
        return [_failure(cfg, *ident, exc, start)]


def _side_paths(cfg: ExperimentConfig, tag: str) -> tuple[Path, Path]:
    out = Path(cfg.out)
    stem = out.with_suffix("")
    return Path(f"{stem}.{tag}.csv"), Path(f"{stem}.{tag}.json")


def _tasks(cfg: ExperimentConfig) -> list:
    tasks = []
    if cfg.kind == "wavelet":
        return [(_wavelet_task, cfg, (level, seed), (None, None, seed))
                for level in cfg.levels for seed in cfg.seeds]
    seeds = (0,) if cfg.nodes_file else cfg.seeds
    for pos, n in enumerate(cfg.n_grid):
        m = rule_m(cfg, n, pos)
        if cfg.kind in ("recover", "recover_weighted"):
            if cfg.fn != "legendre_span":
                tasks.append((_approximation_task, cfg, (n, m, None), (n, m, None)))
            tasks.extend((_recover_task, cfg, (n, m, seed), (n, m, seed)) for seed in seeds)
        elif cfg.kind == "integrate":
            tasks.extend((_integrate_task, cfg, (n, m, seed), (n, m, seed)) for seed in seeds)
        elif cfg.kind == "concentration":
            tasks.append((_concentration_task, cfg, (n, m, cfg.seeds[0]), (n, m, cfg.seeds[0])))
    return tasks


def _spectra_rows(cfg: ExperimentConfig) -> list[_Row]:
    rule = WeightRule(cfg.weight, cfg.s)
    sig = 1.0 / hyperbolic_cross(cfg.d, cfg.m_max, rule).weights
    m = np.arange(1, cfg.m_max + 1)
    rows = []
    name = "sigma_pound" if cfg.weight == "pound" else "sigma_star"
    for j in range(cfg.m_max):
        mj = int(m[j])
        rows.append(_Row(cfg.kind, cfg.weight, cfg.d, None, mj, None, name, float(sig[j]), 0.0))
        if cfg.weight == "pound":
            rows.append(_Row(cfg.kind, cfg.weight, cfg.d, None, mj, None, "bound_pound",
                             bounds.preasymptotic_bound_pound(mj, cfg.s, cfg.d), 0.0))
        else:
            rep = bounds.preasymptotic_bound_krieg(mj, cfg.s, cfg.d)
            if rep.valid:
                rows.append(_Row(cfg.kind, cfg.weight, cfg.d, None, mj, None, "bound_star", rep.value, 0.0))
    return rows


# --- summaries --------------------------------------------------------------------------------

def _summary(cfg: ExperimentConfig, rows: list[_Row]) -> dict:
    summary: dict = {"config": asdict(cfg), "rows": len(rows),
                     "failures": sum(r.metric.startswith("failure:") for r in rows)}
    by_n: dict = {}
    for r in rows:
        by_n.setdefault((r.n, r.m), {}).setdefault(r.metric, []).append(r.value)
    groups = []
    if cfg.kind == "spectra":
        by_n = {}
    for (n, m), metrics in sorted(by_n.items(), key=lambda kv: (kv[0][0] or -1, kv[0][1] or -1)):
        entry: dict = {"n": n, "m": m}
        for metric, vals in sorted(metrics.items()):
            arr = np.asarray(vals, dtype=float)
            if arr.size > 1 or metric in ("sampling_error", "integration_error", "l2_error"):
                entry[metric] = {"mean": float(np.mean(arr)), "median": float(np.median(arr)),
                                 "max": float(np.max(arr)), "count": int(arr.size)}
            else:
                entry[metric] = float(arr[0])
        if "sampling_error" in metrics and "approximation_error" in metrics:
            entry["median_ratio"] = float(np.median(metrics["sampling_error"]) / metrics["approximation_error"][0])
        groups.append(entry)
    summary["groups"] = groups
    if cfg.kind == "spectra":
        sig = {r.m: r.value for r in rows if r.metric.startswith("sigma")}
        bnd = {r.m: r.value for r in rows if r.metric.startswith("bound")}
        summary["dominated"] = all(sig[m] <= bnd[m] for m in bnd)
        summary["checked"] = len(bnd)
    if cfg.kind == "wavelet":
        errs = [g["l2_error"]["mean"] for g in groups if "l2_error" in g]
        summary["monotone"] = bool(all(b < a for a, b in zip(errs, errs[1:])))
        if len(errs) >= 2:
            slope = np.polyfit(np.asarray(cfg.levels, dtype=float), np.log2(errs), 1)[0]
            summary["rate_per_level"] = float(-slope)
    return summary


# --- entry points -----------------------------------------------------------------------------

def _write(cfg: ExperimentConfig, rows: list[_Row]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HEADER)
    for r in sorted(rows, key=_Row.key):
        writer.writerow(r.cells(cfg.record_time))
    out = Path(cfg.out)
    out.write_text(buf.getvalue())
    summary = _summary(cfg, rows)
    Path(f"{out}.summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=str) + "\n")


def run(cfg: ExperimentConfig) -> list[list[str]]:
    """Execute a validated configuration, write its outputs and return the CSV body rows."""
    if cfg.kind == "spectra":
        rows = _spectra_rows(cfg)
    else:
        tasks = _tasks(cfg)
        if cfg.jobs > 1:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                results = list(pool.map(_call, tasks))
        else:
            results = [_call(t) for t in tasks]
        rows = [r for chunk in results for r in chunk]
    _write(cfg, rows)
    return [r.cells(cfg.record_time) for r in sorted(rows, key=_Row.key)]


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cfg = build_config(argv)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # argparse usage errors
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        run(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
