"""Gamma-function constants, the integral operator G and the mean-cost ODE."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

# Lanczos approximation, g = 7, nine coefficients
_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def log_gamma(z: float) -> float:
    """``log |Gamma(z)|`` for real ``z``; positive arguments only outside reflection use."""
    z = float(z)
    if z <= 0.0:
        raise ValueError("log_gamma needs z > 0")
    return _log_gamma(z)


def _log_gamma(z: float) -> float:
    if z < 0.5:
        # reflection: Gamma(z) Gamma(1 - z) = pi / sin(pi z)
        return math.log(math.pi / abs(math.sin(math.pi * z))) - _log_gamma(1.0 - z)
    z -= 1.0
    a = _LANCZOS[0]
    for i in range(1, 9):
        a += _LANCZOS[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * math.log(t) - t + math.log(a)


def gamma_fn(z: float) -> float:
    return math.exp(log_gamma(z))


# -- constants ----------------------------------------------------------------

@dataclass(frozen=True)
class Constants:
    beta_star: float
    p_star: float
    K0: float
    c_U: float
    c_0: float
    p0_l1: float

    def to_json(self) -> str:
        body = ",\n".join(f'  "{k}": {format(v, ".17g")}' for k, v in asdict(self).items())
        return "{\n" + body + "\n}\n"

    @classmethod
    def from_json(cls, text: str) -> "Constants":
        return cls(**json.loads(text))


def _compute_constants() -> Constants:
    b = (math.sqrt(17.0) - 3.0) / 2.0
    s2 = math.sqrt(2.0)
    lg = log_gamma
    k0 = math.exp(lg(2 * b + 2) + lg(b + 2) - math.log(2.0) - 3 * lg(b + 1) - 2 * lg(b / 2 + 1))
    c_u = math.exp(lg(2 * (b + 1)) - math.log(2.0) - 3 * lg(b + 1))
    p0 = math.exp(2 * lg(b / 2 + 1) - lg(b + 2))
    c_0 = math.exp(lg(2 * s2) - 0.5 * math.log(2.0) - 3 * lg(s2))
    rel = abs(k0 * p0 - c_u) / c_u
    if rel > 1e-12:
        raise ArithmeticError(f"K0 * |p0|_1 differs from c_U by {rel:.3e}")
    return Constants(b, s2 - 1.0, k0, c_u, c_0, p0)


@lru_cache(maxsize=1)
def constants() -> Constants:
    """All limit constants, computed from :func:`log_gamma` and cross-checked."""
    return _compute_constants()


def limit_curve(x):
    """``K0 (x (1 - x))^{beta*/2}``; zero at both ends."""
    c = constants()
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("x must lie in [0, 1]")
    out = c.K0 * np.power(x * (1.0 - x), c.beta_star / 2.0)
    return float(out) if out.ndim == 0 else out


def p0(x):
    """The fixed point ``(x (1 - x))^{beta*/2}`` of G."""
    x = np.asarray(x, dtype=float)
    return np.power(x * (1.0 - x), constants().beta_star / 2.0)


def kernel_g(x, y, beta: float | None = None):
    """``g_x(y)``: ``(2/(b+1)) x^{b+1} y^{-b-2}`` for ``y > x`` and the mirror for ``y < x``."""
    b = constants().beta_star if beta is None else beta
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    c = 2.0 / (b + 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        right = c * np.power(x, b + 1.0) * np.power(y, -b - 2.0)
        left = c * np.power(1.0 - x, b + 1.0) * np.power(1.0 - y, -b - 2.0)
    out = np.where(y > x, right, np.where(y < x, left, 0.0))
    return float(out) if out.ndim == 0 else out


# -- grid functions and the operator -----------------------------------------

@dataclass
class GridFunction:
    nodes: np.ndarray
    weights: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        n = self.nodes.size
        if self.weights.size != n or self.values.size != n:
            raise ValueError("nodes, weights and values must have equal length")
        if np.any(np.diff(self.nodes) <= 0) or self.nodes[0] <= 0 or self.nodes[-1] >= 1:
            raise ValueError("nodes must increase strictly inside (0, 1)")
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")

    def integral(self) -> float:
        return float(self.weights @ self.values)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.nodes, self.weights, values)

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node", "weight", "value"])
            for row in zip(self.nodes, self.weights, self.values):
                w.writerow([format(v, ".17g") for v in row])

    @classmethod
    def from_csv(cls, path) -> "GridFunction":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], data[:, 2])


_GL_POINTS = 8
_STENCIL = 6


def _lagrange_rows(nodes: np.ndarray, start: int, pts: np.ndarray) -> np.ndarray:
    """Lagrange basis on ``nodes[start:start+S]`` evaluated at ``pts``; shape ``(len(pts), S)``."""
    xs = nodes[start:start + _STENCIL]
    out = np.ones((pts.size, _STENCIL))
    for j in range(_STENCIL):
        for m in range(_STENCIL):
            if m != j:
                out[:, j] *= (pts - xs[m]) / (xs[j] - xs[m])
    return out


class IntegralOperator:
    """Discretization of ``f -> int_0^1 g_x(y) f(y) dy`` at the grid nodes.

    The interval is cut into panels at the nodes (plus the two end panels
    ``[0, y_0]`` and ``[y_{N-1}, 1]``).  On each panel ``f`` is replaced by its
    six-point Lagrange interpolant through neighbouring nodes (a constant on
    the end panels) and the product with the kernel is integrated by
    eight-point Gauss-Legendre.  Every node is a panel edge, so the jump of
    ``g_x`` at ``y = x`` never falls inside a panel.
    """

    def __init__(self, nodes, beta: float | None = None):
        self.beta = constants().beta_star if beta is None else beta
        nodes = np.asarray(nodes, dtype=float)
        n = nodes.size
        if n < _STENCIL:
            raise ValueError(f"need at least {_STENCIL} nodes")
        self.nodes = nodes
        gx, gw = np.polynomial.legendre.leggauss(_GL_POINTS)
        edges = np.concatenate([[0.0], nodes, [1.0]])
        qpts, qw, rows = [], [], []
        for p in range(n + 1):
            a, b = edges[p], edges[p + 1]
            pts = 0.5 * (b - a) * gx + 0.5 * (a + b)
            interp = np.zeros((_GL_POINTS, n))
            if p == 0:
                interp[:, 0] = 1.0
            elif p == n:
                interp[:, n - 1] = 1.0
            else:
                start = min(max(p - 1 - 2, 0), n - _STENCIL)
                interp[:, start:start + _STENCIL] = _lagrange_rows(nodes, start, pts)
            qpts.append(pts)
            qw.append(0.5 * (b - a) * gw)
            rows.append(interp)
        self.qpts = np.concatenate(qpts)
        self.qw = np.concatenate(qw)
        self.interp = np.vstack(rows)
        self.weights = self.qw @ self.interp
        kern = kernel_g(nodes[:, None], self.qpts[None, :], self.beta)
        self.matrix = (kern * self.qw) @ self.interp

    def grid_function(self, values) -> GridFunction:
        return GridFunction(self.nodes, self.weights, values)

    def __call__(self, f: GridFunction) -> GridFunction:
        if f.nodes.shape != self.nodes.shape or not np.array_equal(f.nodes, self.nodes):
            raise ValueError("grid function lives on a different grid")
        return f.with_values(self.matrix @ f.values)


def logistic_nodes(n: int = 512, span: float = 16.0) -> np.ndarray:
    """Nodes ``1 / (1 + exp(-z))`` for ``z`` evenly spaced in ``[-span, span]``.

    Clusters geometrically toward both ends, which matches the power-law
    behaviour of the fixed point there.
    """
    z = np.linspace(-span, span, n)
    return 1.0 / (1.0 + np.exp(-z))


@lru_cache(maxsize=4)
def operator_on_grid(n: int = 512, span: float = 16.0) -> IntegralOperator:
    return IntegralOperator(logistic_nodes(n, span))


def make_grid(n: int = 512, span: float = 16.0) -> GridFunction:
    """The zero function on the default grid, carrying nodes and weights."""
    op = operator_on_grid(n, span)
    return op.grid_function(np.zeros(n))


def apply_G(f: GridFunction, operator: IntegralOperator | None = None) -> GridFunction:
    if operator is None:
        op = operator_on_grid(f.nodes.size)
        if not np.array_equal(op.nodes, f.nodes):
            op = IntegralOperator(f.nodes)
    else:
        op = operator
    return op(f)


@dataclass(frozen=True)
class PowerIterationResult:
    f: GridFunction
    iterations: int
    error: float
    converged: bool


def power_iteration(f0: GridFunction, target=None, tol: float = 1e-4, max_iter: int = 200,
                    operator: IntegralOperator | None = None) -> PowerIterationResult:
    """Iterate ``f <- G f / int G f`` until the sup distance to ``target`` drops below ``tol``.

    ``target`` defaults to ``p0`` normalized to unit integral on the same grid;
    without it the stopping rule is the change between iterates.
    """
    f = f0.with_values(f0.values / f0.integral())
    ref = None
    if target is None:
        ref = p0(f.nodes)
    elif target is not False:
        ref = np.asarray(target, dtype=float)
    if ref is not None:
        ref = ref / (f.weights @ ref)
    err = math.inf
    for it in range(1, max_iter + 1):
        g = apply_G(f, operator)
        g = g.with_values(g.values / g.integral())
        err = float(np.max(np.abs(g.values - (ref if ref is not None else f.values))))
        f = g
        if err <= tol:
            return PowerIterationResult(f, it, err, True)
    return PowerIterationResult(f, max_iter, err, False)


def kernel_column_mass(y: float, beta: float | None = None) -> float:
    """``int_0^1 g_x(y) dx`` by adaptive quadrature."""
    from scipy import integrate

    f = lambda x: kernel_g(x, y, beta)
    left = integrate.quad(f, 0.0, y, epsabs=1e-14, epsrel=1e-13)[0]
    right = integrate.quad(f, y, 1.0, epsabs=1e-14, epsrel=1e-13)[0]
    return left + right


# -- the mean-cost ODE ---------------------------------------------------------

@dataclass(frozen=True)
class OdeSolution:
    """Mean cost ``f`` for a uniform query, with the moments ``A = int f`` and ``B = int s f``."""

    t: np.ndarray
    f: np.ndarray
    A: np.ndarray
    B: np.ndarray
    step: float
    max_local_error: float

    def __call__(self, t):
        return np.interp(t, self.t, self.f)

    def scaled(self, beta: float | None = None) -> np.ndarray:
        """``t^{-beta} f(t)`` on the grid (``nan`` at ``t = 0``)."""
        b = constants().beta_star if beta is None else beta
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.t > 0, self.f * np.power(self.t, -b), np.nan)


def _rhs(t: float, f: float, a: float, b: float) -> tuple[float, float, float]:
    if t == 0.0:
        return 1.0, f, 0.0
    return 1.0 - f + 4.0 * a / t - 4.0 * b / (t * t), f, t * f


SERIES_CUTOFF = 1.0


def ode_series(t: float, terms: int = 60) -> tuple[float, float, float]:
    """``(f, A, B)`` at small ``t`` from the power series at the origin.

    Writing ``f = sum a_k t^k`` turns the equation into
    ``(j + 1) a_{j+1} = [j = 0] - a_j + 4 a_j / ((j + 1)(j + 2))``, so
    ``a_0 = 0``, ``a_1 = f'(0) = 1`` and ``a_2 = -1/6``.  The series is entire.
    """
    a = 1.0
    f = A = B = 0.0
    tk = t
    for k in range(1, terms + 1):
        f += a * tk
        A += a * tk * t / (k + 1)
        B += a * tk * t * t / (k + 2)
        a *= (4.0 / ((k + 1) * (k + 2)) - 1.0) / (k + 1)
        tk *= t
        if abs(a * tk) < 1e-18 * max(abs(f), 1e-300):
            break
    return f, A, B


def _rk4(t: float, y: tuple[float, float, float], h: float) -> tuple[float, float, float]:
    f, a, b = y
    k1 = _rhs(t, f, a, b)
    k2 = _rhs(t + h / 2, f + h / 2 * k1[0], a + h / 2 * k1[1], b + h / 2 * k1[2])
    k3 = _rhs(t + h / 2, f + h / 2 * k2[0], a + h / 2 * k2[1], b + h / 2 * k2[2])
    k4 = _rhs(t + h, f + h * k3[0], a + h * k3[1], b + h * k3[2])
    return tuple(y[i] + h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]) for i in range(3))


def solve_mean_ode(t_max: float, step: float, tol: float = 1e-9, refine: bool = False) -> OdeSolution:
    """Integrate ``f' = 1 - f + 2 int_0^1 2 (1 - m) f(m t) dm``, ``f(0) = 0``, by RK4.

    The leading 2 counts the two children meeting the query line.  The memory
    term equals ``4 A / t - 4 B / t^2``.  Its coefficients blow up
    at the removable singularity ``t = 0`` (where ``f'(0) = 1``), so grid
    points with ``t <= SERIES_CUTOFF`` are filled from :func:`ode_series` and
    RK4 takes over from there.  Every RK4 step is checked by
    step doubling; when the estimated local error of ``f`` exceeds
    ``tol * max(1, |f|)`` the solver raises, or halves the step and restarts
    if ``refine`` is set.
    """
    if t_max <= 0 or step <= 0:
        raise ValueError("t_max and step must be positive")
    while True:
        n = int(math.ceil(t_max / step - 1e-9))
        h = t_max / n
        ts = np.linspace(0.0, t_max, n + 1)
        out = np.zeros((n + 1, 3))
        first = max(1, int(np.searchsorted(ts, SERIES_CUTOFF, side="right")) - 1)
        for i in range(1, first + 1):
            out[i] = ode_series(ts[i])
        y = tuple(out[first])
        worst = 0.0
        ok = True
        for i in range(first, n):
            t = ts[i]
            full = _rk4(t, y, h)
            half = _rk4(t + h / 2, _rk4(t, y, h / 2), h / 2)
            err = abs(full[0] - half[0]) / 15.0
            worst = max(worst, err)
            if err > tol * max(1.0, abs(half[0])):
                ok = False
                break
            y = half
            out[i + 1] = y
        if ok:
            return OdeSolution(ts, out[:, 0], out[:, 1], out[:, 2], h, worst)
        if not refine:
            raise ValueError(f"step {h} too large: local error {err:.3e} at t = {ts[i]:.4g}")
        step = h / 2
