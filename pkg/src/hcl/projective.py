"""Cross-ratio and Hilbert distance on an open segment of the projective line.

Points are given by affine coordinates in a fixed chart; the boundary of the
segment is ``left < right``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError


def _finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise DomainError(f"non-finite coordinate {v!r}")


@dataclass(frozen=True)
class SegmentChart:
    left: float
    right: float

    def __post_init__(self):
        _finite(self.left, self.right)
        if not self.left < self.right:
            raise DomainError(f"need left < right, got ({self.left}, {self.right})")

    def contains(self, p: float) -> bool:
        return self.left < p < self.right


def cross_ratio(a: float, b: float, y: float, x: float) -> float:
    """Return ``(|ya| |xb|) / (|yb| |xa|)`` from coordinate differences."""
    _finite(a, b, y, x)
    num = abs(y - a) * abs(x - b)
    den = abs(y - b) * abs(x - a)
    if den == 0.0 or num == 0.0:
        raise DomainError("coincident points in cross-ratio")
    return num / den


def hilbert_distance(chart: SegmentChart, a: float, b: float) -> float:
    _finite(a, b)
    if not (chart.contains(a) and chart.contains(b)):
        raise DomainError(f"points ({a}, {b}) not inside ({chart.left}, {chart.right})")
    if a == b:
        return 0.0
    # order x, a, b, y along the line; sorting makes the result exactly symmetric
    lo, hi = (a, b) if a < b else (b, a)
    x, y = chart.left, chart.right
    # log-space avoids underflow of the differences near the boundary
    return 0.5 * (math.log(y - lo) + math.log(hi - x) - math.log(y - hi) - math.log(lo - x))


def t_param_distance(t_i: float, t_f: float) -> float:
    """Hilbert distance in the exponential parameterization of the segment."""
    _finite(t_i, t_f)
    return abs(t_i - t_f)


def tanh_chart_point(t: float) -> float:
    """Affine coordinate on the chart (-1, 1) of the point with parameter ``t``.

    The point ``(e^t, e^-t)`` of the positive quadrant projects to
    ``tanh(t)`` in the chart ``(u - v) / (u + v)``.
    """
    return math.tanh(t)
