"""Seeded Monte Carlo campaigns and their reports.

Every replica draws from its own counter-based stream keyed by
``(seed, experiment, replica, cell)``, where a cell is one ``(size, x)``
combination.  Work is split into chunks of consecutive replicas that may run
in a process pool; results are collected in replica order, so CSV output is
byte-identical for a given configuration whatever the worker count.
"""
from __future__ import annotations

import csv
import json
import math
import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from . import __version__
from ._random import open_uniforms, replica_rng
from ._stats import diff_ci, mean_ci
from .analytics import constants, limit_curve, solve_mean_ode
from .chain import coupling_time, drift_scan, truncated_moments, write_drift_csv
from .fragmentation import P_STAR, FragmentSet
from .poisson import discrete_cost, restricted_cost, restricted_discrete_cost

__all__ = [
    "EXPERIMENTS", "ConfigError", "ExperimentConfig", "EstimateRow", "EstimateReport",
    "mean_ci", "diff_ci", "run", "estimate_mean_cost", "boundedness_scan", "DEFAULTS",
]

EXPERIMENTS = ("theorem1", "uniform", "x0", "fragmentation", "coupling", "drift", "boundedness")

# full-tree construction is cheap below this size and checks the restricted simulator
FULL_TREE_MAX_N = 256
COUPLING_K_MAX = 200

DEFAULTS = {
    "theorem1": dict(sizes=(100, 1000, 10000, 100000), x_values=(0.5,)),
    "uniform": dict(sizes=(2.0, 8.0, 32.0, 1000.0), x_values=()),
    "x0": dict(sizes=(1.0, 10.0, 100.0, 1000.0), x_values=(0.0,)),
    "fragmentation": dict(sizes=(2.0, 8.0, 32.0), x_values=()),
    "coupling": dict(sizes=(20,), x_values=(0.5,)),
    "drift": dict(sizes=(0,), x_values=tuple(i / 100 for i in range(1, 100))),
    "boundedness": dict(sizes=(1.0, 10.0, 100.0, 1000.0), x_values=tuple(i / 10 for i in range(1, 10))),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 2026
    replicas: int = 1000
    sizes: tuple = ()
    x_values: tuple = ()
    out: Path | None = None
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must fit in 64 bits")
        if self.replicas < 1:
            raise ConfigError("replicas must be at least 1")
        if not self.sizes:
            object.__setattr__(self, "sizes", DEFAULTS[self.experiment]["sizes"])
        if not self.x_values:
            object.__setattr__(self, "x_values", DEFAULTS[self.experiment]["x_values"])
        object.__setattr__(self, "sizes", tuple(self.sizes))
        object.__setattr__(self, "x_values", tuple(float(x) for x in self.x_values))
        if any(not 0.0 <= x <= 1.0 for x in self.x_values):
            raise ConfigError("x values must lie in [0, 1]")
        if any(s < 0 for s in self.sizes):
            raise ConfigError("sizes must be nonnegative")
        if self.experiment in ("theorem1", "coupling") and any(s != int(s) for s in self.sizes):
            raise ConfigError(f"{self.experiment} sizes must be integers")
        if self.experiment == "coupling" and any(not 0.0 < x < 1.0 for x in self.x_values):
            raise ConfigError("coupling needs x in (0, 1)")
        if self.experiment == "drift" and any(not 0.0 < x < 1.0 for x in self.x_values):
            raise ConfigError("drift needs x in (0, 1)")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    def echo(self) -> dict:
        d = asdict(self)
        d["out"] = None if self.out is None else str(self.out)
        d["sizes"] = list(self.sizes)
        d["x_values"] = list(self.x_values)
        return d


@dataclass(frozen=True)
class EstimateRow:
    quantity: str
    size: float
    x: float
    mean: float
    variance: float
    half_width: float
    theory: float
    n: int

    @property
    def ratio(self) -> float:
        return self.mean / self.theory if self.theory else math.nan

    @property
    def covers_theory(self) -> bool:
        return abs(self.mean - self.theory) <= self.half_width


@dataclass
class EstimateReport:
    config: ExperimentConfig
    rows: list[EstimateRow]
    extras: dict = field(default_factory=dict)
    passed: bool | None = None
    wall_clock: float = 0.0

    def row(self, quantity: str, size=None, x=None) -> EstimateRow:
        for r in self.rows:
            if r.quantity == quantity and (size is None or r.size == size) and (x is None or r.x == x):
                return r
        raise KeyError((quantity, size, x))

    def table(self) -> str:
        head = f"{'quantity':<22}{'size':>10}{'x':>7}{'mean':>12}{'+/-':>10}{'theory':>12}{'ratio':>9}"
        lines = [head]
        for r in self.rows:
            lines.append(f"{r.quantity:<22}{r.size:>10g}{r.x:>7.3g}{r.mean:>12.5g}{r.half_width:>10.3g}"
                         f"{r.theory:>12.5g}{r.ratio:>9.4f}")
        return "\n".join(lines)


def _estimate(quantity: str, size, x, samples, theory: float) -> EstimateRow:
    a = np.asarray(samples, dtype=float)
    m, hw = mean_ci(a)
    var = float(a.var(ddof=1)) if a.size > 1 else 0.0
    return EstimateRow(quantity, float(size), float(x), m, var, hw if a.size > 1 else 0.0, float(theory), a.size)


# -- replica work -------------------------------------------------------------

def _run_chunk(task):
    kind, seed, stream, cell, size, x, start, stop = task
    out = []
    for r in range(start, stop):
        rng = replica_rng(seed, r, stream, cell)
        if kind == "discrete":
            n = int(size)
            if n <= FULL_TREE_MAX_N:
                out.append(discrete_cost(n, x, rng))
            else:
                out.append(restricted_discrete_cost(n, x, rng))
        elif kind == "poisson":
            out.append(restricted_cost(x, size, rng))
        elif kind == "poisson_uniform":
            u = float(open_uniforms(rng, 1)[0])
            out.append((u, restricted_cost(u, size, rng)))
        elif kind == "x0_path":
            fs = FragmentSet("x0", rng, exponent=P_STAR)
            row = []
            for t in size:
                fs.advance(t)
                row.append((fs.count - 1, fs.martingale, fs.frozen_mass))
            out.append(row)
        elif kind == "frag_uniform":
            fs = FragmentSet("uniform", rng).advance(size)
            out.append((fs.count, fs.frozen_mass))
        elif kind == "coupling":
            out.append(coupling_time(x, COUPLING_K_MAX, rng))
        else:
            raise ValueError(kind)
    return out


def _replicas(kind: str, config: ExperimentConfig, cell: int, size, x, replicas: int | None = None) -> list:
    replicas = config.replicas if replicas is None else replicas
    seed, stream = int(config.seed), config.experiment
    if config.workers == 1:
        return _run_chunk((kind, seed, stream, cell, size, x, 0, replicas))
    chunk = max(1, math.ceil(replicas / (4 * config.workers)))
    tasks = [(kind, seed, stream, cell, size, x, s, min(s + chunk, replicas))
             for s in range(0, replicas, chunk)]
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        parts = list(pool.map(_run_chunk, tasks))
    return [v for part in parts for v in part]


# -- public estimators ----------------------------------------------------------

def estimate_mean_cost(n: int, x: float, replicas: int, seed: int, workers: int = 1) -> tuple[float, float]:
    """Mean discrete cost after ``n`` points at query ``x`` with a 95% half-width."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return 0.0, 0.0
    cfg = ExperimentConfig("theorem1", seed, replicas, (n,), (x,), workers=workers)
    vals = np.asarray(_replicas("discrete", cfg, 0, n, x), dtype=float)
    if np.all(vals == vals[0]):
        return float(vals[0]), 0.0
    return mean_ci(vals)


@dataclass
class BoundednessScan:
    x_values: np.ndarray
    t_values: np.ndarray
    means: np.ndarray          # t^{-beta*} E[N_t(x)], shape (len(t), len(x))
    half_widths: np.ndarray
    samples: list

    @property
    def supremum(self) -> float:
        return float(np.max(self.means))

    def pearson(self, t: float) -> float:
        """Correlation of the profile at ``t`` with ``(x (1 - x))^{beta*/2}``."""
        j = int(np.flatnonzero(self.t_values == t)[0])
        return float(stats.pearsonr(self.means[j], limit_curve(self.x_values))[0])

    def symmetry_gaps(self, t: float) -> np.ndarray:
        """``|m(x) - m(1 - x)| / joint half-width`` for the mirrored pairs of the x grid."""
        j = int(np.flatnonzero(self.t_values == t)[0])
        out = []
        xs = list(self.x_values)
        for i, x in enumerate(xs):
            partner = [k for k, y in enumerate(xs) if abs(y - (1 - x)) < 1e-12]
            if partner and partner[0] > i:
                k = partner[0]
                d, hw = diff_ci(self.samples[j][i], self.samples[j][k])
                out.append(abs(d) / hw if hw > 0 else 0.0)
        return np.array(out)


def boundedness_scan(x_values, t_values, replicas: int, seed: int, workers: int = 1) -> BoundednessScan:
    """``t^{-beta*} E[N_t(x)]`` over a grid, from the query-restricted simulator."""
    x_values = np.asarray(x_values, dtype=float)
    t_values = np.asarray(t_values, dtype=float)
    if x_values.size == 0 or t_values.size == 0:
        raise ValueError("grids must be nonempty")
    cfg = ExperimentConfig("boundedness", seed, replicas, tuple(t_values), tuple(x_values), workers=workers)
    b = constants().beta_star
    means = np.empty((t_values.size, x_values.size))
    hws = np.empty_like(means)
    samples = []
    for j, t in enumerate(t_values):
        row = []
        for i, x in enumerate(x_values):
            vals = np.asarray(_replicas("poisson", cfg, j * x_values.size + i, t, x), dtype=float)
            scaled = vals * t ** -b
            means[j, i], hws[j, i] = mean_ci(scaled)
            row.append(scaled)
        samples.append(row)
    return BoundednessScan(x_values, t_values, means, hws, samples)


# -- experiments --------------------------------------------------------------

def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v) -> str:
    return repr(float(v))


def _theorem1(cfg: ExperimentConfig, out: Path | None) -> EstimateReport:
    b = constants().beta_star
    rows, csv_rows = [], []
    for i, x in enumerate(cfg.x_values):
        for j, n in enumerate(cfg.sizes):
            n = int(n)
            cell = i * len(cfg.sizes) + j
            vals = _replicas("discrete", cfg, cell, n, x) if n > 0 else [0] * cfg.replicas
            scaled = np.asarray(vals, dtype=float) * (n ** -b if n > 0 else 0.0)
            rows.append(_estimate("scaled_cost", n, x, scaled, limit_curve(x)))
            csv_rows.extend((r, n, _fmt(x), int(v)) for r, v in enumerate(vals))
    if out:
        _write_rows(out / "theorem1.csv", ["replica", "t_or_n", "x", "cost"], csv_rows)
    return EstimateReport(cfg, rows)


def _uniform(cfg: ExperimentConfig, out: Path | None) -> EstimateReport:
    c = constants()
    ode = solve_mean_ode(max(cfg.sizes), 0.05) if max(cfg.sizes) > 0 else None
    rows, csv_rows = [], []
    for j, t in enumerate(cfg.sizes):
        t = float(t)
        pairs = _replicas("poisson_uniform", cfg, j, t, math.nan)
        vals = np.array([v for _, v in pairs], dtype=float)
        scale = t ** -c.beta_star if t > 0 else 0.0
        rows.append(_estimate("scaled_cost", t, math.nan, vals * scale, c.c_U))
        if ode is not None and t > 0:
            rows.append(_estimate("cost_vs_ode", t, math.nan, vals, float(ode(t))))
        csv_rows.extend((r, _fmt(t), _fmt(u), int(v)) for r, (u, v) in enumerate(pairs))
    if out:
        _write_rows(out / "uniform.csv", ["replica", "t_or_n", "x", "cost"], csv_rows)
    return EstimateReport(cfg, rows)


def _x0(cfg: ExperimentConfig, out: Path | None) -> EstimateReport:
    c = constants()
    ts = tuple(sorted(float(t) for t in cfg.sizes))
    paths = _replicas("x0_path", cfg, 0, ts, 0.0)
    arr = np.array(paths, dtype=float)  # (replicas, len(ts), 3)
    rows, csv_rows = [], []
    for j, t in enumerate(ts):
        scale = t ** (1.0 - math.sqrt(2.0)) if t > 0 else 0.0
        rows.append(_estimate("scaled_cost", t, 0.0, arr[:, j, 0] * scale, c.c_0))
        rows.append(_estimate("martingale", t, 0.0, arr[:, j, 1], 1.0))
    for r, path in enumerate(paths):
        for t, (cnt, mv, fm) in zip(ts, path):
            csv_rows.append((r, _fmt(t), int(cnt) + 1, _fmt(mv), _fmt(fm)))
    if out:
        _write_rows(out / "x0.csv", ["replica", "t", "count", "martingale_value", "frozen_mass"], csv_rows)
    return EstimateReport(cfg, rows, {"max_frozen_mass": float(arr[:, :, 2].max())})


def _fragmentation(cfg: ExperimentConfig, out: Path | None) -> EstimateReport:
    ode = solve_mean_ode(max(max(cfg.sizes), 1.0), 0.05)
    rows, csv_rows = [], []
    for j, t in enumerate(cfg.sizes):
        t = float(t)
        res = _replicas("frag_uniform", cfg, j, t, math.nan)
        counts = np.array([cnt for cnt, _ in res], dtype=float)
        rows.append(_estimate("fragments_minus_one", t, math.nan, counts - 1, float(ode(t))))
        csv_rows.extend((r, _fmt(t), int(cnt), "", _fmt(fm)) for r, (cnt, fm) in enumerate(res))
    if out:
        _write_rows(out / "fragmentation.csv", ["replica", "t", "count", "martingale_value", "frozen_mass"], csv_rows)
    return EstimateReport(cfg, rows)


def _coupling(cfg: ExperimentConfig, out: Path | None) -> EstimateReport:
    rows, csv_rows, extras = [], [], {}
    horizons = (25, 50, 100, COUPLING_K_MAX)
    for i, x in enumerate(cfg.x_values):
        runs = _replicas("coupling", cfg, i, COUPLING_K_MAX, x)
        T = np.array([-1 if r.T is None else r.T for r in runs])
        cens = np.array([r.censored for r in runs])
        ok = ~cens
        rows.append(_estimate("geometric_moment_1.15", COUPLING_K_MAX, x, 1.15 ** T[ok].astype(float), math.nan))
        for k in cfg.sizes:
            rows.append(_estimate("P(T<=k)", int(k), x, (ok & (T <= int(k))).astype(float), math.nan))
        extras[f"x={x!r}"] = {
            "censored": int(cens.sum()),
            "truncated_moments": dict(zip(map(str, horizons), truncated_moments(T, cens, horizons).tolist())),
        }
        csv_rows.extend((r, _fmt(x), "" if run.T is None else run.T, int(run.censored), _fmt(run.log_mbar_at_T))
                        for r, run in enumerate(runs))
    if out:
        _write_rows(out / "coupling.csv", ["replica", "x0", "T", "censored", "logMbar_at_T"], csv_rows)
    return EstimateReport(cfg, rows, extras)


def _drift(cfg: ExperimentConfig, out: Path | None) -> EstimateReport:
    xs = np.asarray(cfg.x_values, dtype=float)
    ratios = drift_scan(xs)
    rows = [EstimateRow("drift_ratio", 0.0, float(x), float(r), 0.0, 0.0, 0.85, 1) for x, r in zip(xs, ratios)]
    if out:
        write_drift_csv(out / "drift.csv", xs, ratios)
    return EstimateReport(cfg, rows, {"max_ratio": float(ratios.max())})


def _boundedness(cfg: ExperimentConfig, out: Path | None) -> EstimateReport:
    scan = boundedness_scan(cfg.x_values, cfg.sizes, cfg.replicas, cfg.seed, cfg.workers)
    rows, csv_rows = [], []
    b = constants().beta_star
    for j, t in enumerate(scan.t_values):
        for i, x in enumerate(scan.x_values):
            rows.append(_estimate("scaled_cost", t, x, scan.samples[j][i], limit_curve(x)))
            costs = np.rint(scan.samples[j][i] * t ** b).astype(int)
            csv_rows.extend((r, _fmt(t), _fmt(x), int(v)) for r, v in enumerate(costs))
    xs = scan.x_values
    extras = {
        "supremum": scan.supremum,
        "limit_curve_max": float(np.max(limit_curve(xs))),
        "pearson": {repr(float(t)): scan.pearson(t) for t in scan.t_values} if xs.size > 2 else {},
    }
    if out:
        _write_rows(out / "boundedness.csv", ["replica", "t_or_n", "x", "cost"], csv_rows)
    return EstimateReport(cfg, rows, extras)


_RUNNERS = {
    "theorem1": _theorem1, "uniform": _uniform, "x0": _x0, "fragmentation": _fragmentation,
    "coupling": _coupling, "drift": _drift, "boundedness": _boundedness,
}


# -- acceptance thresholds for --check -------------------------------------------

def check(report: EstimateReport) -> bool:
    """Pass/fail of the experiment against its theoretical target."""
    exp = report.config.experiment
    rows = report.rows
    if exp == "theorem1":
        big = max(r.size for r in rows)
        return all(0.85 <= r.ratio <= 1.15 for r in rows if r.size == big)
    if exp == "uniform":
        big = max(r.size for r in rows)
        ode_ok = all(r.covers_theory for r in rows if r.quantity == "cost_vs_ode")
        return ode_ok and all(abs(r.ratio - 1) <= 0.1 for r in rows if r.quantity == "scaled_cost" and r.size == big)
    if exp == "x0":
        big = max(r.size for r in rows)
        mart = all(r.covers_theory for r in rows if r.quantity == "martingale")
        return mart and all(abs(r.ratio - 1) <= 0.1 for r in rows if r.quantity == "scaled_cost" and r.size == big)
    if exp == "fragmentation":
        return all(r.covers_theory for r in rows)
    if exp == "coupling":
        return all(np.isfinite(r.mean) for r in rows)
    if exp == "drift":
        return all(r.mean <= 0.85 + 1e-6 for r in rows)
    if exp == "boundedness":
        return report.extras["supremum"] <= 2 * report.extras["limit_curve_max"]
    raise ConfigError(exp)


def version_string() -> str:
    """``git describe`` output when run from a checkout, else the package version."""
    try:
        here = Path(__file__).resolve().parent
        res = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if res.returncode == 0 and res.stdout.strip():
            return f"{__version__}+g{res.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def run(config: ExperimentConfig, with_check: bool = False) -> EstimateReport:
    """Run one campaign; writes ``<experiment>.csv`` and ``summary.json`` when ``config.out`` is set."""
    out = None
    if config.out is not None:
        out = Path(config.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
        if not os.access(out, os.W_OK):
            raise ConfigError(f"output directory {out} is not writable")
    t0 = time.perf_counter()
    report = _RUNNERS[config.experiment](config, out)
    report.wall_clock = time.perf_counter() - t0
    if with_check:
        report.passed = check(report)
    if out is not None:
        summary = {
            "config": config.echo(),
            "version": version_string(),
            "wall_clock_seconds": report.wall_clock,
            "rows": [dict(asdict(r), ratio=r.ratio) for r in report.rows],
            "extras": report.extras,
            "passed": report.passed,
        }
        (out / "summary.json").write_text(json.dumps(summary, indent=2, allow_nan=True) + "\n")
    return report
