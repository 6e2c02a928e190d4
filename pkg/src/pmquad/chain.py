"""The spine chain ``(X_k, M_k)``, its uniformizing coupling and the drift bound.

One transition picks a uniform split point ``(u, v)`` of the current spine
rectangle and follows the bottom child meeting the query line.  Given the
current place ``x``, write ``c = min(x, 1 - x)`` and ``L = -log(x (1 - x))``.
The event ``E = {M < c}`` has probability ``c L``; on ``E`` the mass ratio is
uniform on ``(0, c)`` and independent of the new place, whose density is
``h(y) / L`` with ``h(y) = 1 / (1 - y)`` left of ``x`` and ``1 / y`` right of
it.  Since ``h >= 1``, the place on ``E`` is a mixture: uniform with weight
``1 / L`` (the coupling) and a residual density ``(h - 1) / (L - 1)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import integrate, special

from ._stats import mean_ci
from ._random import UniformStream, as_stream, open_uniforms
from .quadtree import spine_step

CEMETERY = None  # the absorbing state of the killed chain


def chain_step(x, rng):
    """One transition ``x -> (x', m')`` of the spine chain.

    ``x`` may be a scalar or an array; ``rng`` is a numpy Generator or a
    :class:`UniformStream` (scalar case only).
    """
    if np.ndim(x) == 0:
        if not 0.0 < x < 1.0:
            raise ValueError("x must lie in (0, 1)")
        us = as_stream(rng)
        u, v = us.next(), us.next()
        return spine_step(float(x), u, v)
    x = np.asarray(x, dtype=float)
    uv = open_uniforms(rng, (2,) + x.shape)
    return spine_step(x, uv[0], uv[1])


def coupling_event_prob(x: float) -> float:
    """``P(M < min(x, 1 - x))`` from place ``x``."""
    return -min(x, 1.0 - x) * math.log(x * (1.0 - x))


def coupling_bernoulli_param(x: float) -> float:
    """Probability that the place is redrawn uniformly, given the event."""
    return -1.0 / math.log(x * (1.0 - x))


# -- inverse CDFs for the conditional place --------------------------------

def _left_residual(s: float, x: float) -> float:
    """Solve ``-log(1 - y) - y = s`` on ``[0, x]``."""
    if s <= 0.0:
        return 0.0
    if s < 1e-6:
        y = math.sqrt(2.0 * s)
    else:
        y = 1.0 + float(special.lambertw(-math.exp(-(s + 1.0)), 0).real)
    # Newton polish; the Lambert W route loses digits near its branch point
    for _ in range(4):
        g = -math.log1p(-y) - y - s
        dg = y / (1.0 - y)
        if dg <= 0.0:
            break
        y -= g / dg
    return min(max(y, 0.0), x)


def sample_residual_place(x: float, us: UniformStream) -> float:
    """Draw from ``(h(y) - 1) / (L - 1)``, the place density when uncoupled on E."""
    big_l = -math.log(x * (1.0 - x))
    assert big_l - 1.0 > 1e-12, "residual normalization must be positive"
    left_mass = -math.log1p(-x) - x
    right_mass = -math.log(x) - (1.0 - x)
    w = us.next() * (left_mass + right_mass)
    if w < left_mass:
        return _left_residual(w, x)
    # mirror image of the left branch
    return 1.0 - _left_residual(w - left_mass, 1.0 - x)


def sample_place_given_event(x: float, us: UniformStream) -> float:
    """Draw from ``h(y) / L``: ``1 - (1 - x)^q`` on the left, ``x^q`` on the right."""
    left_mass = -math.log1p(-x)
    right_mass = -math.log(x)
    w = us.next() * (left_mass + right_mass)
    if w < left_mass:
        return -math.expm1(-w)  # inverse of -log(1 - y) = w
    return math.exp(-(w - left_mass))  # inverse of -log(y) on the right


# -- coupled chain ----------------------------------------------------------

@dataclass(frozen=True)
class ChainState:
    """State of the coupled spine chain.

    ``x is None`` marks the cemetery of the killed chain.  ``T`` is the
    coupling step, ``None`` while uncoupled.
    """

    x: Optional[float]
    k: int = 0
    coupled: bool = False
    T: Optional[int] = None
    log_mbar: float = 0.0

    @property
    def dead(self) -> bool:
        return self.x is None


def _uncoupled_move(x: float, us: UniformStream) -> tuple[float, float, bool]:
    """One move from ``x`` that does not couple: returns ``(x', m', coupled)``."""
    c = min(x, 1.0 - x)
    big_l = -math.log(x * (1.0 - x))
    if us.next() < c * big_l:
        m = c * us.next()
        if us.next() * big_l < 1.0:
            return us.next(), m, True
        return sample_residual_place(x, us), m, False
    # the complement of E: exact rejection from the plain transition
    while True:
        u, v = us.next(), us.next()
        xn, m = spine_step(x, u, v)
        if m >= c:
            return xn, m, False


def coupled_step(state: ChainState, rng) -> ChainState:
    """Advance the coupled chain by one step.

    Before coupling this is the two-stage device; after coupling the chain
    runs on with the plain transition, which keeps the uniform law.
    """
    if state.dead:
        raise ValueError("cannot step the cemetery state")
    us = as_stream(rng)
    k = state.k + 1
    if state.coupled:
        xn, m = chain_step(state.x, us)
        return replace(state, x=xn, k=k, log_mbar=state.log_mbar + math.log(m))
    xn, m, b = _uncoupled_move(state.x, us)
    return ChainState(xn, k, b, k if b else None, state.log_mbar + math.log(m))


def killed_step(state: ChainState, rng) -> ChainState:
    """Killed chain: jump to the cemetery exactly when the coupled chain couples."""
    if state.dead:
        return replace(state, k=state.k + 1)
    nxt = coupled_step(replace(state, coupled=False, T=None), rng)
    if nxt.coupled:
        return ChainState(CEMETERY, nxt.k, True, nxt.k, nxt.log_mbar)
    return nxt


@dataclass(frozen=True)
class CouplingRun:
    x0: float
    T: Optional[int]
    censored: bool
    log_mbar_at_T: float


def coupling_time(x: float, k_max: int, rng) -> CouplingRun:
    """First step at which the coupled chain redraws its place uniformly."""
    if not 0.0 < x < 1.0:
        raise ValueError("x must lie in (0, 1)")
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    us = as_stream(rng)
    s = ChainState(float(x))
    while s.k < k_max:
        s = coupled_step(s, us)
        if s.coupled:
            return CouplingRun(float(x), s.T, False, s.log_mbar)
    return CouplingRun(float(x), None, True, s.log_mbar)


@dataclass
class CouplingBatch:
    """Replicas of the coupled chain run to a fixed horizon ``k``."""

    x0: float
    k: int
    T: np.ndarray          # coupling step, -1 when not coupled by ``k_max``
    censored: np.ndarray   # T > k_max
    x_k: np.ndarray
    log_mbar_k: np.ndarray
    log_mbar_T: np.ndarray

    @property
    def accepted(self) -> np.ndarray:
        """Replicas with ``T <= k``."""
        return (~self.censored) & (self.T <= self.k)


def simulate_coupling(x0: float, k: int, replicas: int, rng, k_max: int = 200) -> CouplingBatch:
    """Run ``replicas`` coupled chains to step ``max(k, T)`` (T censored at ``k_max``)."""
    if k > k_max:
        raise ValueError("horizon k must not exceed k_max")
    us = as_stream(rng)
    T = np.full(replicas, -1, dtype=int)
    xs = np.empty(replicas)
    lmk = np.empty(replicas)
    lmT = np.full(replicas, np.nan)
    for i in range(replicas):
        s = ChainState(float(x0))
        while s.k < k_max and (s.k < k or not s.coupled):
            s = coupled_step(s, us)
            if s.k == k:
                xs[i], lmk[i] = s.x, s.log_mbar
            if s.coupled and s.T == s.k:
                T[i], lmT[i] = s.k, s.log_mbar
        if k == 0:
            xs[i], lmk[i] = x0, 0.0
    return CouplingBatch(float(x0), k, T, T < 0, xs, lmk, lmT)


@dataclass(frozen=True)
class GeometricMoment:
    z: float
    mean: float
    half_width: float
    n_used: int
    n_censored: int


def geometric_moment(T, censored, z: float = 1.15) -> GeometricMoment:
    """Mean of ``z**T`` over uncensored runs with a 95% Student-t half-width."""
    T = np.asarray(T)
    ok = ~np.asarray(censored, dtype=bool)
    vals = np.power(z, T[ok].astype(float))
    m, hw = mean_ci(vals)
    return GeometricMoment(z, m, hw, int(ok.sum()), int((~ok).sum()))


def truncated_moments(T, censored, horizons, z: float = 1.15) -> np.ndarray:
    """``mean(z**T 1{T <= h})`` over all runs, for each horizon ``h``."""
    T = np.asarray(T)
    ok = ~np.asarray(censored, dtype=bool)
    vals = np.where(ok, np.power(z, np.where(ok, T, 0).astype(float)), 0.0)
    return np.array([np.mean(np.where(ok & (T <= h), vals, 0.0)) for h in horizons])


# -- killed kernel and drift ------------------------------------------------

def killed_kernel(x, y):
    """Absolutely continuous part of the killed kernel and its kill mass."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    c = np.minimum(x, 1.0 - x)
    left = y < x
    dens = np.where(left, (1.0 - x) / np.square(1.0 - np.where(left, y, 0.0)),
                    x / np.square(np.where(left, 1.0, y))) - c
    if dens.ndim == 0:
        return float(dens), float(c)
    return dens, c


def potential_V(x):
    """``10 / sqrt(min(x, 1 - x))``, and ``1`` on the cemetery (``None``)."""
    if x is None:
        return 1.0
    x = np.asarray(x, dtype=float)
    out = 10.0 / np.sqrt(np.minimum(x, 1.0 - x))
    return float(out) if out.ndim == 0 else out


def _density(x: float, c: float, y: float) -> float:
    if y < x:
        return (1.0 - x) / ((1.0 - y) * (1.0 - y)) - c
    return x / (y * y) - c


def drift_check(x: float, epsrel: float = 1e-10) -> float:
    """``(int p(x, dy) V(y)) / V(x)`` with the cemetery term included.

    The pieces next to 0 and 1 carry the inverse square-root singularity of
    V and use QUADPACK's algebraic endpoint weights; the middle piece is
    smooth.
    """
    if not 0.0 < x < 1.0:
        raise ValueError("x must lie in (0, 1)")
    c = min(x, 1.0 - x)
    lo, hi = min(x, 0.5), max(x, 0.5)
    opts = dict(epsabs=0.0, epsrel=epsrel, limit=200)
    # int_0^lo 10 y^{-1/2} p dy and int_hi^1 10 (1-y)^{-1/2} p dy
    head = integrate.quad(lambda y: 10.0 * _density(x, c, y), 0.0, lo,
                          weight="alg", wvar=(-0.5, 0.0), **opts)[0]
    tail = integrate.quad(lambda y: 10.0 * _density(x, c, y), hi, 1.0,
                          weight="alg", wvar=(0.0, -0.5), **opts)[0]
    mid = 0.0
    if hi > lo:
        mid = integrate.quad(lambda y: _density(x, c, y) * potential_V(y), lo, hi, **opts)[0]
    return (c * 1.0 + head + mid + tail) / potential_V(x)


def drift_scan(xs) -> np.ndarray:
    return np.array([drift_check(float(x)) for x in xs])


# -- CSV ---------------------------------------------------------------------

def write_coupling_csv(path, runs) -> None:
    """Rows ``replica,x0,T,censored,logMbar_at_T`` from :class:`CouplingRun` objects."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replica", "x0", "T", "censored", "logMbar_at_T"])
        for i, r in enumerate(runs):
            w.writerow([i, repr(r.x0), "" if r.T is None else r.T, int(r.censored), repr(float(r.log_mbar_at_T))])


def write_drift_csv(path, xs, ratios) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "ratio"])
        for x, r in zip(xs, ratios):
            w.writerow([repr(float(x)), repr(float(r))])
