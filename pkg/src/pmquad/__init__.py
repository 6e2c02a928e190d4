"""Partial match queries in random quadtrees: simulators, constants and checks."""
__version__ = "0.1.0"

from .quadtree import (  # noqa: E402
    PointRecord, Rect, QuadCover, UNIT_SQUARE, split, build_quadtree, partial_match_cost,
    normalize_rect, spine_trace, SpineTrace,
)
from .analytics import constants, limit_curve, log_gamma  # noqa: E402
