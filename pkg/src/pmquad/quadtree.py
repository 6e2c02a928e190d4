"""Random point quadtrees on the unit square and the partial match cost.

A cover is built by inserting points one at a time; each point splits the
closed rectangle containing it into four closed quadrants.  The cost of a
partial match query at abscissa ``x`` is the number of rectangles meeting the
vertical segment ``{x} x [0, 1]`` minus one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._random import open_uniforms


@dataclass(frozen=True)
class PointRecord:
    x: float
    y: float
    index: int = 0

    def __post_init__(self):
        if not (0.0 < self.x < 1.0 and 0.0 < self.y < 1.0):
            raise ValueError(f"point ({self.x}, {self.y}) is not inside the open unit square")


@dataclass(frozen=True)
class Rect:
    """Closed axis-parallel rectangle ``[x_lo, x_hi] x [y_lo, y_hi]``."""

    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float

    def __post_init__(self):
        if not (self.x_lo < self.x_hi and self.y_lo < self.y_hi):
            raise ValueError(f"degenerate rectangle {self!r}")

    @property
    def width(self) -> float:
        return self.x_hi - self.x_lo

    @property
    def height(self) -> float:
        return self.y_hi - self.y_lo

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains_interior(self, px: float, py: float) -> bool:
        return self.x_lo < px < self.x_hi and self.y_lo < py < self.y_hi

    def meets_vertical(self, x: float) -> bool:
        # closed rectangles: a query on a split line touches both neighbours
        return self.x_lo <= x <= self.x_hi

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_lo, self.x_hi, self.y_lo, self.y_hi)


UNIT_SQUARE = Rect(0.0, 1.0, 0.0, 1.0)


def split(r: Rect, px: float, py: float) -> tuple[Rect, Rect, Rect, Rect]:
    """Four closed quadrants of ``r`` at the interior point ``(px, py)``.

    Order is bottom-left, top-left, bottom-right, top-right, so the child index
    is ``2 * (right) + (top)``.
    """
    if not r.contains_interior(px, py):
        raise ValueError(f"split point ({px}, {py}) is not interior to {r!r}")
    return (
        Rect(r.x_lo, px, r.y_lo, py),
        Rect(r.x_lo, px, py, r.y_hi),
        Rect(px, r.x_hi, r.y_lo, py),
        Rect(px, r.x_hi, py, r.y_hi),
    )


@dataclass(frozen=True)
class AffineMap:
    """Orientation-preserving map ``(x, y) -> (sx * x + ox, sy * y + oy)``."""

    scale_x: float = 1.0
    offset_x: float = 0.0
    scale_y: float = 1.0
    offset_y: float = 0.0

    def __call__(self, x: float, y: float) -> tuple[float, float]:
        return (self.scale_x * x + self.offset_x, self.scale_y * y + self.offset_y)

    def apply_rect(self, r: Rect) -> Rect:
        x_lo, y_lo = self(r.x_lo, r.y_lo)
        x_hi, y_hi = self(r.x_hi, r.y_hi)
        return Rect(x_lo, x_hi, y_lo, y_hi)

    def compose(self, inner: "AffineMap") -> "AffineMap":
        """``self o inner``: apply ``inner`` first."""
        return AffineMap(
            self.scale_x * inner.scale_x,
            self.scale_x * inner.offset_x + self.offset_x,
            self.scale_y * inner.scale_y,
            self.scale_y * inner.offset_y + self.offset_y,
        )


def normalize_rect(r: Rect) -> AffineMap:
    """The affine map sending ``r`` onto the unit square, corners to corners."""
    return AffineMap(1.0 / r.width, -r.x_lo / r.width, 1.0 / r.height, -r.y_lo / r.height)


class _Node:
    __slots__ = ("rect", "px", "py", "children")

    def __init__(self, rect: Rect):
        self.rect = rect
        self.px = math.nan
        self.py = math.nan
        self.children: tuple[_Node, _Node, _Node, _Node] | None = None


@dataclass
class QuadCover:
    """Covering of the unit square by ``3 n + 1`` closed rectangles.

    ``build_quadtree`` keeps the insertion tree so cost queries descend in
    O(depth); covers read back from text only hold the flat rectangle list.
    """

    rects: tuple[Rect, ...]
    n_points: int
    _root: _Node | None = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.rects)

    @property
    def total_area(self) -> float:
        return math.fsum(r.area for r in self.rects)

    def cost(self, x: float) -> int:
        return partial_match_cost(self, x)


def _leaves(root: _Node) -> list[Rect]:
    out = []
    stack = [root]
    while stack:
        node = stack.pop()
        if node.children is None:
            out.append(node.rect)
        else:
            stack.extend(reversed(node.children))
    return out


def _as_xy(points) -> tuple[list[float], list[float]]:
    if isinstance(points, np.ndarray):
        arr = np.asarray(points, dtype=float).reshape(-1, 2)
        return arr[:, 0].tolist(), arr[:, 1].tolist()
    xs, ys = [], []
    for p in points:
        if isinstance(p, PointRecord):
            xs.append(p.x)
            ys.append(p.y)
        else:
            px, py = p
            xs.append(float(px))
            ys.append(float(py))
    return xs, ys


def build_quadtree(points: Iterable[PointRecord] | Sequence[tuple[float, float]] | np.ndarray) -> QuadCover:
    """Insert ``points`` in order and return the resulting cover.

    Raises ``ValueError`` for points outside the open unit square, repeated
    coordinates on either axis, or a point landing on an existing split line.
    """
    xs, ys = _as_xy(points)
    n = len(xs)
    if n:
        ax, ay = np.asarray(xs), np.asarray(ys)
        if np.any((ax <= 0) | (ax >= 1) | (ay <= 0) | (ay >= 1)):
            raise ValueError("points must lie in the open unit square")
        if np.unique(ax).size != n or np.unique(ay).size != n:
            raise ValueError("points must have pairwise distinct x and y coordinates")

    root = _Node(UNIT_SQUARE)
    for k in range(n):
        px, py = xs[k], ys[k]
        node = root
        while node.children is not None:
            if px == node.px or py == node.py:
                raise ValueError(f"point {k} lies on an existing split line")
            node = node.children[2 * (px > node.px) + (py > node.py)]
        node.px, node.py = px, py
        node.children = tuple(_Node(q) for q in split(node.rect, px, py))
    return QuadCover(tuple(_leaves(root)), n, root)


def partial_match_cost(cover: QuadCover, x: float) -> int:
    """Number of rectangles of ``cover`` meeting ``{x} x [0, 1]``, minus one."""
    if cover._root is None:
        return sum(1 for r in cover.rects if r.meets_vertical(x)) - 1
    hits = 0
    stack = [cover._root]
    while stack:
        node = stack.pop()
        ch = node.children
        if ch is None:
            hits += 1
        elif x < node.px:
            stack.append(ch[0])
            stack.append(ch[1])
        elif x > node.px:
            stack.append(ch[2])
            stack.append(ch[3])
        else:
            stack.extend(ch)
    return hits - 1


def random_points(n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. uniform points of the open unit square, shape ``(n, 2)``."""
    return open_uniforms(rng, (n, 2))


# -- text format ------------------------------------------------------------

def cover_to_text(cover: QuadCover) -> str:
    lines = [f"n={cover.n_points}"]
    lines.extend(" ".join(format(v, ".17g") for v in r.as_tuple()) for r in cover.rects)
    return "\n".join(lines) + "\n"


def cover_from_text(text: str) -> QuadCover:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("n="):
        raise ValueError("cover text must start with a 'n=<count>' line")
    n = int(lines[0][2:])
    rects = tuple(Rect(*map(float, ln.split())) for ln in lines[1:])
    if len(rects) != 3 * n + 1:
        raise ValueError(f"expected {3 * n + 1} rectangles for n={n}, found {len(rects)}")
    return QuadCover(rects, n)


def save_cover(cover: QuadCover, path) -> None:
    Path(path).write_text(cover_to_text(cover))


def load_cover(path) -> QuadCover:
    return cover_from_text(Path(path).read_text())


# -- the all-zeros spine ----------------------------------------------------

def spine_step(x, u, v):
    """Place and mass ratio of the bottom child meeting the query line.

    ``x`` is the relative abscissa of the query inside the current rectangle
    and ``(u, v)`` the split point in normalized coordinates.  Returns
    ``(x / u, u v)`` when ``x < u`` and ``((x - u) / (1 - u), (1 - u) v)``
    otherwise.  Works elementwise on arrays.
    """
    left = x < u
    width = np.where(left, u, 1.0 - u)
    place = np.where(left, x / np.where(left, u, 1.0), (x - u) / width)
    if np.ndim(place) == 0:
        return float(place), float(width * v)
    return place, width * v


@dataclass(frozen=True)
class SpineTrace:
    """Positions, mass ratios and split delays along the all-zeros spine.

    Index 0 is the unit square itself: ``places[0] = x_query`` and
    ``log_masses[0] = 0``.  ``taus[k - 1]`` is the normalized exponential
    delay before rectangle ``k - 1`` splits.
    """

    x_query: float
    places: np.ndarray
    log_masses: np.ndarray
    taus: np.ndarray

    @property
    def depth(self) -> int:
        return len(self.places) - 1

    @property
    def steps(self) -> list[tuple[float, float, float | None]]:
        out = [(float(self.places[0]), 0.0, None)]
        for k in range(1, self.depth + 1):
            out.append((float(self.places[k]), float(self.log_masses[k]), float(self.taus[k - 1])))
        return out

    @property
    def masses(self) -> np.ndarray:
        return np.exp(self.log_masses)

    @property
    def log_mbar(self) -> np.ndarray:
        """log of the cumulative area ``M_1 ... M_k`` for k = 0..depth."""
        return np.cumsum(self.log_masses)

    @property
    def mbar(self) -> np.ndarray:
        return np.exp(self.log_mbar)

    @property
    def log_F(self) -> np.ndarray:
        """log of ``F_k = sum_i tau_i prod_{j>=i} M_j``; ``-inf`` at k = 0."""
        out = np.empty(self.depth + 1)
        out[0] = -np.inf
        for k in range(1, self.depth + 1):
            out[k] = self.log_masses[k] + np.logaddexp(out[k - 1], math.log(self.taus[k - 1]))
        return out

    @property
    def F(self) -> np.ndarray:
        return np.exp(self.log_F)

    def effective_time(self, t: float) -> float:
        """``Mbar_k t - F_k``: the clock of the depth-k spine rectangle at time t."""
        return float(self.mbar[-1] * t - self.F[-1])


def spine_trace(x: float, k: int, rng: np.random.Generator) -> SpineTrace:
    """Simulate ``k`` steps of the all-zeros spine started from place ``x``."""
    if k < 0:
        raise ValueError("depth k must be nonnegative")
    if not 0.0 < x < 1.0:
        raise ValueError("x must lie in (0, 1)")
    uv = open_uniforms(rng, (k, 3))
    places = np.empty(k + 1)
    log_m = np.zeros(k + 1)
    places[0] = x
    cur = x
    for i in range(k):
        cur, m = spine_step(cur, uv[i, 0], uv[i, 1])
        places[i + 1] = cur
        log_m[i + 1] = math.log(m)
    taus = -np.log(uv[:, 2])
    return SpineTrace(float(x), places, log_m, taus)
