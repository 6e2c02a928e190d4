"""Poissonized quadtree: arrival process, cost paths and depoissonization.

Points arrive as a unit-rate Poisson process in time, uniformly on the square.
Only the rectangles meeting the query line matter for the cost, and each of
them (area ``a``) is hit after an independent exponential time of rate ``a``.
When hit it is replaced by exactly two rectangles meeting the line, so the
query-restricted simulators keep a heap of exponential clocks and never build
the rest of the tree.
"""
from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special

from ._random import UniformStream, as_stream, open_uniforms
from .quadtree import build_quadtree, partial_match_cost, random_points, spine_trace


@dataclass(frozen=True)
class ArrivalProcess:
    taus: np.ndarray

    def count(self, t: float) -> int:
        return int(np.searchsorted(self.taus, t, side="right"))


def sample_arrivals(t_max: float, rng: np.random.Generator) -> ArrivalProcess:
    """Arrival times of a unit-rate Poisson process on ``[0, t_max]``."""
    gaps = []
    total = 0.0
    while True:
        block = -np.log(open_uniforms(rng, 64 + int(t_max)))
        cums = total + np.cumsum(block)
        keep = cums[cums <= t_max]
        gaps.append(keep)
        if keep.size < cums.size:
            break
        total = cums[-1]
    return ArrivalProcess(np.concatenate(gaps))


@dataclass(frozen=True)
class CostPath:
    """Right-continuous step path of ``N_t(x)``; ``values[i]`` holds from ``jump_times[i]``."""

    x: float
    t_max: float
    jump_times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        idx = np.searchsorted(self.jump_times, t, side="right")
        vals = np.concatenate([[0], self.values])[idx]
        return int(vals) if np.ndim(vals) == 0 else vals

    @property
    def final(self) -> int:
        return int(self.values[-1]) if self.values.size else 0


def _restricted_run(x: float, t_max: float, us: UniformStream, record: bool):
    """Event loop for the query-restricted continuous-time simulator.

    Heap entries are ``(split time, area, place)``.  Returns the final count
    and, if ``record``, the list of jump times.
    """
    nxt = us.next
    log = math.log
    heap = [(-log(nxt()), 1.0, x)]
    push, pop = heapq.heappush, heapq.heappop
    count = 0
    times = [] if record else None
    while heap[0][0] <= t_max:
        t, a, X = pop(heap)
        u = nxt()
        v = nxt()
        if X < u:
            w = u
            X = X / u
        else:
            w = 1.0 - u
            X = (X - u) / w
        a0 = a * w * v
        a1 = a * w - a0
        push(heap, (t - log(nxt()) / a0, a0, X))
        push(heap, (t - log(nxt()) / a1, a1, X))
        count += 1
        if record:
            times.append(t)
    return count, times


def simulate_cost_path(x: float, t_max: float, rng) -> CostPath:
    """Exact sample of ``(N_t(x))_{t <= t_max}`` via the query-restricted simulator."""
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    _, times = _restricted_run(float(x), float(t_max), as_stream(rng), record=True)
    jt = np.asarray(times, dtype=float)
    return CostPath(float(x), float(t_max), jt, np.arange(1, jt.size + 1))


def restricted_cost(x: float, t: float, rng) -> int:
    """``N_t(x)`` only, without storing the path."""
    if t <= 0:
        return 0
    return _restricted_run(float(x), float(t), as_stream(rng), record=False)[0]


def restricted_cost_at(x: float, times, rng) -> np.ndarray:
    """``N_t(x)`` at every ``t`` in ``times`` along one sample path."""
    times = np.asarray(times, dtype=float)
    t_max = float(times.max())
    if t_max <= 0:
        return np.zeros(times.shape, dtype=int)
    _, jt = _restricted_run(float(x), t_max, as_stream(rng), record=True)
    return np.searchsorted(np.asarray(jt), times, side="right")


def restricted_discrete_cost(n: int, x: float, rng) -> int:
    """One sample of the discrete cost after ``n`` uniform points.

    The order in which the tracked rectangles split is the jump chain of the
    exponential clocks; between two tracked splits the number of points
    falling elsewhere is geometric with success probability equal to the
    current tracked area.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    us = as_stream(rng)
    nxt = us.next
    log, log1p = math.log, math.log1p
    push, pop = heapq.heappush, heapq.heappop
    heap = [(0.0, 1.0, float(x))]
    tracked = 1.0
    arrivals = 0
    count = 0
    while True:
        g = nxt()
        if tracked < 1.0:
            arrivals += int(log(g) / log1p(-tracked)) + 1
        else:
            arrivals += 1
        if arrivals > n:
            return count
        t, a, X = pop(heap)
        u = nxt()
        v = nxt()
        if X < u:
            w = u
            X = X / u
        else:
            w = 1.0 - u
            X = (X - u) / w
        a0 = a * w * v
        a1 = a * w - a0
        tracked -= a - a * w
        push(heap, (t - log(nxt()) / a0, a0, X))
        push(heap, (t - log(nxt()) / a1, a1, X))
        count += 1


def discrete_cost(n: int, x: float, rng: np.random.Generator) -> int:
    """``N_n(x)`` from an explicitly built quadtree on ``n`` uniform points."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return 0
    return partial_match_cost(build_quadtree(random_points(n, rng)), x)


def full_tree_cost(x: float, t: float, rng: np.random.Generator) -> int:
    """``N_t(x)`` from the full quadtree of a Poisson(t) number of points."""
    n = int(rng.poisson(t))
    return discrete_cost(n, x, rng)


def arrival_run(n: int, x: float, rng, t_end: float | None = None) -> tuple[float, int, int]:
    """Simulate every arrival up to ``max(tau_n, t_end)``.

    Returns ``(tau_n, N_{tau_n}(x), N_{t_end}(x))``; ``t_end`` defaults to
    ``n``.  Each arrival lands in the tracked rectangles with probability
    equal to their total area and then picks one proportionally to area.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    t_end = float(n) if t_end is None else float(t_end)
    nxt = as_stream(rng).next
    areas = [1.0]
    places = [float(x)]
    tracked = 1.0
    t = 0.0
    i = 0
    count = 0
    tau_n = math.nan
    cost_tau = cost_end = None
    while True:
        t -= math.log(nxt())
        if cost_end is None and t > t_end:
            cost_end = count
            if cost_tau is not None:
                break
        i += 1
        hit = nxt()
        if hit < tracked:
            acc = 0.0
            j = 0
            for j, a in enumerate(areas):
                acc += a
                if hit < acc:
                    break
            a, X = areas[j], places[j]
            u, v = nxt(), nxt()
            if X < u:
                w = u
                X = X / u
            else:
                w = 1.0 - u
                X = (X - u) / w
            areas[j] = a * w * v
            places[j] = X
            areas.append(a * w - a * w * v)
            places.append(X)
            tracked -= a - a * w
            count += 1
        if i == n:
            tau_n, cost_tau = t, count
            if cost_end is not None:
                break
    return tau_n, cost_tau, cost_end


@dataclass(frozen=True)
class DepoissonizationSummary:
    n: int
    x: float
    eps: float
    replicas: int
    p_outside: float
    p_outside_exact: float
    mean_sq_gap_outside: float
    max_cost_at_tau_n: int

    @property
    def bound_holds(self) -> bool:
        return self.max_cost_at_tau_n <= self.n


def gamma_band_tail(n: int, eps: float) -> float:
    """Exact ``P(tau_n not in [n(1-eps), n(1+eps)])`` for ``tau_n ~ Gamma(n, 1)``."""
    return float(special.gammainc(n, n * (1 - eps)) + special.gammaincc(n, n * (1 + eps)))


def depoissonization_report(n: int, x: float, eps: float, replicas: int, rng) -> DepoissonizationSummary:
    """Estimate ``P(tau_n outside band)`` and ``E[|N_{tau_n} - N_n|^2 ; outside]``."""
    if n < 1 or not 0 < eps < 1:
        raise ValueError("need n >= 1 and 0 < eps < 1")
    us = as_stream(rng)
    outside = 0
    sq = 0.0
    worst = 0
    for _ in range(replicas):
        tau_n, c_tau, c_n = arrival_run(n, x, us)
        worst = max(worst, c_tau)
        if not n * (1 - eps) <= tau_n <= n * (1 + eps):
            outside += 1
            sq += (c_tau - c_n) ** 2
    return DepoissonizationSummary(
        n, float(x), float(eps), replicas,
        outside / replicas, gamma_band_tail(n, eps), sq / replicas, worst,
    )


def k_step_samples(x: float, t: float, k: int, replicas: int,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Paired samples for the k-step cost identity.

    Returns ``(direct, spine)`` where ``direct[i]`` is ``N_t(x)`` and
    ``spine[i]`` is ``2**k * N'_{Mbar_k t - F_k}(X_k)`` with ``N'`` a fresh
    copy started from the spine rectangle of depth ``k``.  The difference of
    their means lies in ``[0, 2**k - 1]``.
    """
    us = UniformStream(rng)
    direct = np.empty(replicas)
    spine = np.empty(replicas)
    for i in range(replicas):
        direct[i] = restricted_cost(x, t, us)
        tr = spine_trace(x, k, rng)
        s = tr.effective_time(t)
        spine[i] = 2 ** k * (restricted_cost(float(tr.places[-1]), s, us) if s > 0 else 0)
    return direct, spine


def write_cost_csv(path, rows) -> None:
    """Rows of ``(replica, t_or_n, x, cost)``."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replica", "t_or_n", "x", "cost"])
        for replica, size, x, cost in rows:
            w.writerow([replica, repr(size), repr(float(x)), int(cost)])
