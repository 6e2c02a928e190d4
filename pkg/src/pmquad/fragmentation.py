"""Binary self-similar fragmentations of index 1.

A fragment of mass ``m`` waits an exponential time of rate ``m`` and is then
replaced by two fragments ``r1 m`` and ``r2 m`` drawn from a dislocation law.
Two laws matter here, both read off a uniform split ``(u, v)`` of a spine
rectangle:

* uniform query place: the query falls left of ``u`` with probability ``u``,
  so the surviving column has width ``w`` with density ``2 w`` and the two
  children weigh ``(w v, w (1 - v))``;
* query on the left edge: the surviving column is always the left one, so
  ``w = u`` is uniform.
"""
from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import optimize

from ._random import as_stream
from ._stats import mean_ci

P_STAR = math.sqrt(2.0) - 1.0
FREEZE_LOG_MASS = -60.0


@dataclass(frozen=True)
class DislocationSample:
    s1: float
    s2: float

    def __post_init__(self):
        if not (self.s1 >= self.s2 > 0.0 and self.s1 + self.s2 <= 1.0):
            raise ValueError(f"invalid dislocation ({self.s1}, {self.s2})")

    @property
    def total(self) -> float:
        return self.s1 + self.s2


def _ordered(a: float, b: float) -> DislocationSample:
    return DislocationSample(a, b) if a >= b else DislocationSample(b, a)


def _ratios_uniform(nxt) -> tuple[float, float]:
    w = math.sqrt(nxt())  # width of the column holding a uniform query
    v = nxt()
    return w * v, w * (1.0 - v)


def _ratios_x0(nxt) -> tuple[float, float]:
    w = nxt()
    v = nxt()
    return w * v, w * (1.0 - v)


def dislocation_uniform(rng) -> DislocationSample:
    """Children of a spine split seen from a uniform query place."""
    return _ordered(*_ratios_uniform(as_stream(rng).next))


def dislocation_x0(rng) -> DislocationSample:
    """Children of a spine split seen from the query at the left edge."""
    return _ordered(*_ratios_x0(as_stream(rng).next))


DISLOCATIONS: dict[str, Callable] = {"uniform": _ratios_uniform, "x0": _ratios_x0}


def _ratio_sampler(dislocation) -> Callable:
    if callable(dislocation):
        return dislocation
    try:
        return DISLOCATIONS[dislocation]
    except KeyError:
        raise ValueError(f"unknown dislocation {dislocation!r}") from None


# -- Malthusian exponents ----------------------------------------------------

def psi_uniform(beta):
    """``1 - E[s1^b + s2^b]`` for the uniform-query dislocation."""
    beta = np.asarray(beta, dtype=float)
    return (beta * beta + 3.0 * beta - 2.0) / ((beta + 1.0) * (beta + 2.0))


def psi_x0(beta):
    """``1 - E[s1^b + s2^b]`` for the left-edge dislocation."""
    beta = np.asarray(beta, dtype=float)
    return ((beta + 1.0) ** 2 - 2.0) / (beta + 1.0) ** 2


@dataclass(frozen=True)
class MalthusianSpec:
    psi: Callable[[float], float]
    name: str = ""


UNIFORM_SPEC = MalthusianSpec(psi_uniform, "uniform")
X0_SPEC = MalthusianSpec(psi_x0, "x0")


def malthusian_root(spec: MalthusianSpec, lo: float = 0.1, hi: float = 1.0) -> float:
    """Root of ``spec.psi`` on ``[lo, hi]`` by Brent's method."""
    f = lambda b: float(spec.psi(b))
    flo, fhi = f(lo), f(hi)
    if not flo < 0.0 < fhi:
        raise ValueError(f"psi does not change sign from negative to positive on [{lo}, {hi}]")
    root = optimize.brentq(f, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)
    if abs(f(root)) > 1e-14:
        raise ArithmeticError(f"|psi(root)| = {abs(f(root))} above 1e-14")
    return root


def psi_monte_carlo(dislocation, betas, samples: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo ``1 - E[s1^b + s2^b]`` with 95% half-widths."""
    nxt = as_stream(rng).next
    draw = _ratio_sampler(dislocation)
    pairs = np.array([draw(nxt) for _ in range(samples)])
    means, hws = [], []
    for b in np.atleast_1d(betas):
        m, hw = mean_ci(1.0 - (pairs[:, 0] ** b + pairs[:, 1] ** b))
        means.append(m)
        hws.append(hw)
    return np.array(means), np.array(hws)


# -- fragment sets -----------------------------------------------------------

class FragmentSet:
    """Live fragments of one fragmentation, advanced event by event.

    Heap entries are ``(split time, log mass, id)``.  Fragments whose log mass
    falls below ``freeze_below`` never split again; they keep counting and
    keep contributing to the martingale, and their total mass is reported in
    ``frozen_mass``.
    """

    def __init__(self, dislocation="uniform", rng=None, exponent: float | None = None,
                 track_lineage: bool = False, freeze_below: float = FREEZE_LOG_MASS):
        self._draw = _ratio_sampler(dislocation)
        self._us = as_stream(rng if rng is not None else np.random.default_rng())
        self.exponent = exponent
        self.freeze_below = freeze_below
        self.time = 0.0
        self.frozen: list[float] = []
        self.frozen_mass = 0.0
        self.martingale = 1.0 if exponent is not None else math.nan
        self.splits = 0
        self._next_id = 1
        self._lineage: dict[int, list[float]] | None = {0: []} if track_lineage else None
        self._heap = [(-math.log(self._us.next()), 0.0, 0)]

    @property
    def count(self) -> int:
        return len(self._heap) + len(self.frozen)

    def log_masses(self) -> np.ndarray:
        return np.array([lm for _, lm, _ in self._heap] + self.frozen)

    def masses(self) -> np.ndarray:
        return np.exp(self.log_masses())

    def lineages(self) -> list[tuple[float, list[float]]]:
        """``(log mass, log ratios from the root)`` for every live fragment."""
        if self._lineage is None:
            raise RuntimeError("lineage tracking is off")
        return [(lm, self._lineage[i]) for _, lm, i in self._heap]

    def next_split_time(self) -> float:
        return self._heap[0][0] if self._heap else math.inf

    def split_next(self) -> tuple[float, float, float]:
        """Perform the earliest split; returns ``(time, log r1, log r2)``."""
        nxt = self._us.next
        t, lm, ident = heapq.heappop(self._heap)
        r1, r2 = self._draw(nxt)
        lr1, lr2 = math.log(r1), math.log(r2)
        p = self.exponent
        if p is not None:
            self.martingale += math.exp(p * lm) * (r1 ** p + r2 ** p - 1.0)
        lineage = self._lineage.pop(ident) if self._lineage is not None else None
        for lr in (lr1, lr2):
            child = lm + lr
            if child < self.freeze_below:
                self.frozen.append(child)
                self.frozen_mass += math.exp(child)
                continue
            cid = self._next_id
            self._next_id += 1
            heapq.heappush(self._heap, (t - math.log(nxt()) / math.exp(child), child, cid))
            if lineage is not None:
                self._lineage[cid] = lineage + [lr]
        self.time = t
        self.splits += 1
        return t, lr1, lr2

    def advance(self, t: float) -> "FragmentSet":
        """Run every split with time ``<= t``; afterwards the state is the one at ``t``."""
        while self._heap and self._heap[0][0] <= t:
            self.split_next()
        self.time = max(self.time, t)
        return self

    def martingale_exact(self) -> float:
        """Martingale recomputed from scratch (the running value accumulates rounding)."""
        return math.fsum(np.exp(self.exponent * self.log_masses()))


def simulate_fragment_count(t: float, dislocation, rng) -> int:
    """Number of fragments at time ``t`` starting from a single unit mass."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return FragmentSet(dislocation, rng).advance(t).count


@dataclass(frozen=True)
class MartingalePath:
    """Piecewise-constant path of the left-edge martingale and fragment count."""

    t_max: float
    jump_times: np.ndarray
    values: np.ndarray
    counts: np.ndarray
    frozen_mass: float

    def __call__(self, t):
        idx = np.searchsorted(self.jump_times, t, side="right")
        vals = np.concatenate([[1.0], self.values])[idx]
        return float(vals) if np.ndim(vals) == 0 else vals

    def count(self, t):
        idx = np.searchsorted(self.jump_times, t, side="right")
        vals = np.concatenate([[1], self.counts])[idx]
        return int(vals) if np.ndim(vals) == 0 else vals


def martingale_path(t_max: float, rng, exponent: float = P_STAR) -> MartingalePath:
    """Sum of fragment masses to the power ``exponent`` for the left-edge fragmentation."""
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    fs = FragmentSet("x0", rng, exponent=exponent)
    times, vals, counts = [], [], []
    while fs.next_split_time() <= t_max:
        t, _, _ = fs.split_next()
        times.append(t)
        vals.append(fs.martingale)
        counts.append(fs.count)
    return MartingalePath(float(t_max), np.array(times), np.array(vals),
                          np.array(counts, dtype=int), fs.frozen_mass)


def martingale_at(t: float, rng) -> float:
    return FragmentSet("x0", rng, exponent=P_STAR).advance(t).martingale


def fixed_point_samples(t: float, replicas: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Samples of ``M_t`` and of ``s1^p M'_t + s2^p M''_t`` with independent copies.

    Both serve as proxies for the two sides of the distributional fixed point
    of the limit.
    """
    us = as_stream(rng)
    lhs = np.array([martingale_at(t, us) for _ in range(replicas)])
    rhs = np.empty(replicas)
    for i in range(replicas):
        r1, r2 = _ratios_x0(us.next)
        rhs[i] = r1 ** P_STAR * martingale_at(t, us) + r2 ** P_STAR * martingale_at(t, us)
    return lhs, rhs


@dataclass(frozen=True)
class L2Row:
    t: float
    mean_scaled_count: float
    mean_martingale: float
    mse: float
    corr: float
    second_moment: float


def l2_limit_check(t_grid, replicas: int, rng, c0: float | None = None) -> list[L2Row]:
    """Compare ``t^{1 - sqrt 2} N_t(0)`` with ``c0 M_t`` on shared paths."""
    if replicas < 1000:
        raise ValueError("need at least 1000 replicas")
    if c0 is None:
        from .analytics import constants
        c0 = constants().c_0
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    us = as_stream(rng)
    counts = np.empty((replicas, t_grid.size))
    mart = np.empty((replicas, t_grid.size))
    for i in range(replicas):
        fs = FragmentSet("x0", us, exponent=P_STAR)
        for j, t in enumerate(t_grid):
            fs.advance(t)
            counts[i, j] = fs.count - 1
            mart[i, j] = fs.martingale
    rows = []
    for j, t in enumerate(t_grid):
        scaled = t ** (1.0 - math.sqrt(2.0)) * counts[:, j]
        corr = float(np.corrcoef(scaled, mart[:, j])[0, 1]) if scaled.std() > 0 else math.nan
        rows.append(L2Row(float(t), float(scaled.mean()), float(mart[:, j].mean()),
                          float(np.mean((scaled - c0 * mart[:, j]) ** 2)), corr,
                          float(np.mean(mart[:, j] ** 2))))
    return rows


def write_fragment_csv(path, rows) -> None:
    """Rows ``(replica, t, count, martingale_value, frozen_mass)``."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replica", "t", "count", "martingale_value", "frozen_mass"])
        for replica, t, count, mv, fm in rows:
            w.writerow([replica, repr(float(t)), int(count), repr(float(mv)), repr(float(fm))])
