"""Acceptance criteria 1-12, each at its stated tolerance and runtime budget.

Every test records one line in ``RESULTS``; ``conftest.py`` prints them as a
pass/fail block at the end of the session.  All Monte Carlo criteria use the
single seed below, fixed before any run.
"""
import csv
import math
import time
from collections import defaultdict

import numpy as np
import pytest
from scipy import stats

from pmquad._random import UniformStream, replica_rng
from pmquad._stats import diff_ci, mean_ci
from pmquad.analytics import (
    constants, kernel_column_mass, limit_curve, log_gamma, operator_on_grid, p0, power_iteration,
    solve_mean_ode,
)
from pmquad.chain import drift_scan, simulate_coupling, truncated_moments
from pmquad.experiments import EXPERIMENTS, DEFAULTS, ExperimentConfig, boundedness_scan, run
from pmquad.fragmentation import UNIFORM_SPEC, X0_SPEC, malthusian_root
from pmquad.poisson import discrete_cost, restricted_discrete_cost
from pmquad.quadtree import build_quadtree, random_points

SEED = 2026
RESULTS = {}


def record(num, ok, detail):
    RESULTS[num] = (bool(ok), detail)
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}")
    assert ok, detail


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_01_exponents():
    t0 = time.perf_counter()
    b = malthusian_root(UNIFORM_SPEC, 0.1, 1.0)
    p = malthusian_root(X0_SPEC, 0.1, 1.0)
    dt = time.perf_counter() - t0
    eb, ep = abs(b - (math.sqrt(17) - 3) / 2), abs(p - (math.sqrt(2) - 1))
    record(1, eb <= 1e-12 and ep <= 1e-12 and dt < 1,
           f"|beta - beta*| = {eb:.1e}, |p - p*| = {ep:.1e}, {dt:.3f}s")


def test_02_constants_identity():
    t0 = time.perf_counter()
    b = (math.sqrt(17) - 3) / 2
    lg = log_gamma
    k0 = math.exp(lg(2 * b + 2) + lg(b + 2) - math.log(2) - 3 * lg(b + 1) - 2 * lg(b / 2 + 1))
    c_u = math.exp(lg(2 * (b + 1)) - math.log(2) - 3 * lg(b + 1))
    p0_l1 = math.exp(2 * lg(b / 2 + 1) - lg(b + 2))
    c = constants()
    dt = time.perf_counter() - t0
    rel = abs(k0 * p0_l1 - c_u) / c_u
    same = (k0, c_u, p0_l1) == (c.K0, c.c_U, c.p0_l1)
    record(2, rel <= 1e-12 and same and dt < 1,
           f"K0 |p0|_1 vs c_U relative error {rel:.1e} (K0={k0:.12g}, c_U={c_u:.12g}), {dt:.3f}s")


def test_03_kernel_normalization():
    t0 = time.perf_counter()
    ys = (np.arange(32) + 0.5) / 32
    err = max(abs(kernel_column_mass(y) - 1.0) for y in ys)
    dt = time.perf_counter() - t0
    record(3, err <= 1e-8 and dt < 5, f"max |int g_x(y) dx - 1| over 32 y = {err:.1e}, {dt:.2f}s")


def test_04_fixed_point():
    t0 = time.perf_counter()
    op = operator_on_grid(512)
    f = op.grid_function(p0(op.nodes))
    fp_err = float(np.max(np.abs(op(f).values - f.values)))
    res = power_iteration(op.grid_function(np.ones(512)), tol=1e-4, max_iter=200, operator=op)
    dt = time.perf_counter() - t0
    record(4, fp_err <= 1e-6 and res.converged and dt < 30,
           f"|G p0 - p0|_inf = {fp_err:.1e}; power iteration error {res.error:.1e} "
           f"after {res.iterations} iterations, {dt:.1f}s")


@pytest.fixture(scope="module")
def uniform_campaign(tmp_path_factory):
    out = tmp_path_factory.mktemp("uniform")
    t0 = time.perf_counter()
    rep = run(ExperimentConfig("uniform", SEED, 10_000, (2.0, 8.0, 32.0), (), out))
    costs = defaultdict(list)
    for row in read_csv(out / "uniform.csv"):
        costs[float(row["t_or_n"])].append(int(row["cost"]))
    return rep, {t: np.array(v, float) for t, v in costs.items()}, time.perf_counter() - t0


def test_05_cauchy_problem(uniform_campaign):
    rep, _, dt = uniform_campaign
    rows = [r for r in rep.rows if r.quantity == "cost_vs_ode"]
    ok = len(rows) == 3 and all(r.covers_theory for r in rows) and dt < 120
    detail = "; ".join(f"t={r.size:g}: f={r.theory:.4f} vs {r.mean:.4f} +/- {r.half_width:.4f}" for r in rows)
    record(5, ok, f"{detail}; {dt:.1f}s")


def test_06_uniform_limit():
    t0 = time.perf_counter()
    sol = solve_mean_ode(1e4, 0.05)
    scaled = float(sol.scaled()[-1])
    c_u = constants().c_U
    dt = time.perf_counter() - t0
    rel = abs(scaled / c_u - 1)
    record(6, rel <= 0.05 and dt < 60, f"t^-beta* f(1e4) = {scaled:.5f}, c_U = {c_u:.5f}, off by {rel:.2%}, {dt:.1f}s")


def test_07_fragmentation_equivalence(uniform_campaign, tmp_path):
    _, costs, _ = uniform_campaign
    t0 = time.perf_counter()
    run(ExperimentConfig("fragmentation", SEED, 10_000, (2.0, 8.0, 32.0), (), tmp_path))
    frags = defaultdict(list)
    for row in read_csv(tmp_path / "fragmentation.csv"):
        frags[float(row["t"])].append(int(row["count"]) - 1)
    dt = time.perf_counter() - t0
    parts, ok = [], dt < 180
    for t in (2.0, 8.0, 32.0):
        d, hw = diff_ci(np.array(frags[t], float), costs[t])
        ok &= abs(d) <= hw
        parts.append(f"t={t:g}: diff {d:+.3f} +/- {hw:.3f}")
    record(7, ok, "; ".join(parts) + f"; {dt:.1f}s")


def test_08_left_edge(tmp_path):
    t0 = time.perf_counter()
    rep = run(ExperimentConfig("x0", SEED, 10_000, (1.0, 10.0, 100.0, 1000.0), (0.0,), tmp_path))
    dt = time.perf_counter() - t0
    mart = [rep.row("martingale", t) for t in (1.0, 10.0, 100.0)]
    scaled = rep.row("scaled_cost", 1000.0)
    ok = all(r.covers_theory for r in mart) and abs(scaled.ratio - 1) <= 0.10 and dt < 180
    detail = "; ".join(f"E[M_{r.size:g}] = {r.mean:.4f} +/- {r.half_width:.4f}" for r in mart)
    record(8, ok, f"{detail}; t^(1-sqrt2) E[N_t(0)] / c0 at t=1e3 = {scaled.ratio:.4f}; "
                  f"frozen mass {rep.extras['max_frozen_mass']:.1e}; {dt:.1f}s")


def test_09_coupling():
    t0 = time.perf_counter()
    batch = simulate_coupling(0.5, 20, 10_100, replica_rng(SEED, 0, "acceptance-coupling"), k_max=200)
    acc = np.flatnonzero(batch.accepted)[:10_000]
    xk, lm = batch.x_k[acc], batch.log_mbar_k[acc]
    ks = stats.kstest(xk, "uniform").pvalue
    corr = float(np.corrcoef(xk, lm)[0, 1])
    horizons = [25, 50, 100, 200]
    tm = truncated_moments(batch.T, batch.censored, horizons)
    ok_T = ~batch.censored
    m, hw = mean_ci(1.15 ** batch.T[ok_T].astype(float))
    stable = np.isfinite(m) and abs(tm[-1] - tm[1]) <= hw
    dt = time.perf_counter() - t0
    ok = acc.size == 10_000 and ks > 0.01 and abs(corr) < 0.05 and stable and dt < 120
    record(9, ok, f"KS p = {ks:.3f} on {acc.size} accepted; corr = {corr:+.4f}; "
                  f"E[1.15^T] = {m:.4f} +/- {hw:.4f}, truncated at {horizons}: "
                  f"{', '.join(f'{v:.4f}' for v in tm)}; censored {int(batch.censored.sum())}; {dt:.1f}s")


def test_10_drift():
    t0 = time.perf_counter()
    xs = np.arange(1, 100) / 100
    ratios = drift_scan(xs)
    dt = time.perf_counter() - t0
    worst = int(np.argmax(ratios))
    record(10, bool(np.all(ratios <= 0.85 + 1e-6)) and dt < 30,
           f"max ratio {ratios[worst]:.5f} at x = {xs[worst]:.2f}, {dt:.2f}s")


def test_11_theorem1(tmp_path):
    t0 = time.perf_counter()
    rep = run(ExperimentConfig("theorem1", SEED, 10_000, (100, 1000, 10_000, 100_000), (0.5,), tmp_path))
    rows = sorted(rep.rows, key=lambda r: r.size)
    ratios = [r.ratio for r in rows]
    se = [r.half_width / 1.96 / r.theory for r in rows]
    monotone = all(ratios[i + 1] - ratios[i] >= -1.96 * math.hypot(se[i], se[i + 1]) for i in range(3))
    in_band = 0.85 <= ratios[-1] <= 1.15
    scan = boundedness_scan(np.arange(1, 10) / 10, [1000.0], 2000, SEED)
    r = scan.pearson(1000.0)
    dt = time.perf_counter() - t0
    ok = monotone and in_band and r > 0.99 and dt < 600
    record(11, ok, "ratios " + ", ".join(f"n={int(x.size)}: {q:.4f}" for x, q in zip(rows, ratios))
           + f"; monotone (CI-adjusted) {monotone}; Pearson r at t=1e3 = {r:.5f}; "
             f"sup t^-beta* E[N_t(x)] = {scan.supremum:.3f}; {dt:.1f}s")


def test_12_structure(tmp_path):
    t0 = time.perf_counter()
    rng = replica_rng(SEED, 0, "acceptance-structure")
    sizes = rng.integers(0, 1001, size=1000)
    counts_ok = all(len(build_quadtree(random_points(int(n), rng))) == 3 * n + 1 for n in sizes)
    us = UniformStream(replica_rng(SEED, 1, "acceptance-structure"))
    full = [discrete_cost(64, 0.5, rng) for _ in range(10_000)]
    spine = [restricted_discrete_cost(64, 0.5, us) for _ in range(10_000)]
    ks = stats.ks_2samp(full, spine).pvalue
    small = {
        "theorem1": ((64, 200), (0.3,)), "uniform": ((4.0,), ()), "x0": ((5.0, 20.0), ()),
        "fragmentation": ((4.0,), ()), "coupling": ((20,), (0.5,)), "drift": ((0,), (0.25, 0.5)),
        "boundedness": ((10.0,), (0.2, 0.5)),
    }
    identical = True
    for exp in EXPERIMENTS:
        sizes_, xs = small[exp]
        blobs = []
        for i in range(2):
            d = tmp_path / f"{exp}{i}"
            run(ExperimentConfig(exp, SEED, 200, sizes_, xs, d))
            blobs.append((d / f"{exp}.csv").read_bytes())
        identical &= blobs[0] == blobs[1]
    dt = time.perf_counter() - t0
    record(12, counts_ok and ks > 0.01 and identical and dt < 120,
           f"3n+1 on 1000 trees {counts_ok}; spine vs full tree KS p = {ks:.3f} at n=64; "
           f"bit-identical reruns of {len(EXPERIMENTS)} campaigns {identical}; {dt:.1f}s")
