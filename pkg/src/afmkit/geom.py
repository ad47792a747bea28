"""Sub-pixel geometry primitives.

Pixel ``(x, y)`` sits at integer coordinates: ``x`` is the column in
``[0, W-1]`` and ``y`` the row in ``[0, H-1]``. Distances between points
and segments are handled as *squared* Euclidean norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class GeometryError(ValueError):
    """Raised for invalid geometric input (degenerate segments, NaNs, ...)."""


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"non-finite point ({self.x}, {self.y})")

    def __iter__(self):
        yield self.x
        yield self.y


@dataclass(frozen=True)
class LineSegment:
    start: Point2
    end: Point2

    def __post_init__(self):
        if self.start == self.end:
            raise GeometryError("zero-length segment")

    @classmethod
    def from_coords(cls, x1, y1, x2, y2) -> "LineSegment":
        return cls(Point2(float(x1), float(y1)), Point2(float(x2), float(y2)))

    @property
    def coords(self) -> tuple[float, float, float, float]:
        return (self.start.x, self.start.y, self.end.x, self.end.y)

    @property
    def length(self) -> float:
        return math.hypot(self.end.x - self.start.x, self.end.y - self.start.y)


@dataclass(frozen=True)
class LatticeDims:
    width: int
    height: int

    def __post_init__(self):
        if int(self.width) != self.width or int(self.height) != self.height:
            raise GeometryError("lattice dimensions must be integers")
        if self.width < 1 or self.height < 1:
            raise GeometryError(f"lattice must be at least 1x1, got {self.width}x{self.height}")

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)

    def contains(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height


@dataclass(frozen=True)
class LineSegmentMap:
    """Ordered segments on a lattice.

    ``scores`` is optional per-segment metadata; squeeze stores the fitted
    aspect ratio there (lower means thinner, i.e. more confident).
    """

    dims: LatticeDims
    segments: tuple[LineSegment, ...] = ()
    scores: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.scores is not None:
            object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))
            if len(self.scores) != len(self.segments):
                raise GeometryError("scores and segments differ in length")

    def __len__(self) -> int:
        return len(self.segments)

    def as_array(self) -> np.ndarray:
        """Segments as an ``(n, 4)`` float array of ``x1, y1, x2, y2``."""
        if not self.segments:
            return np.zeros((0, 4))
        return np.array([s.coords for s in self.segments], dtype=float)

    @classmethod
    def from_array(cls, dims: LatticeDims, arr, scores=None) -> "LineSegmentMap":
        segs = tuple(LineSegment.from_coords(*row) for row in np.asarray(arr, dtype=float).reshape(-1, 4))
        return cls(dims, segs, scores)

    def scaled(self, s: float) -> "LineSegmentMap":
        """Scale coordinates by ``s`` and dims by ``s`` rounded up."""
        if s <= 0:
            raise GeometryError("scale must be positive")
        # 1e-9 keeps e.g. 320*1.1 from rounding up to 353
        dims = LatticeDims(max(1, math.ceil(self.dims.width * s - 1e-9)),
                           max(1, math.ceil(self.dims.height * s - 1e-9)))
        return LineSegmentMap.from_array(dims, self.as_array() * s, self.scores)

    def select(self, keep: Iterable[int]) -> "LineSegmentMap":
        keep = list(keep)
        scores = None if self.scores is None else [self.scores[i] for i in keep]
        return LineSegmentMap(self.dims, [self.segments[i] for i in keep], scores)


def _theta(d) -> float:
    return d.theta if isinstance(d, Direction) else float(d) % math.pi


@dataclass(frozen=True)
class Direction:
    """Undirected line direction, stored modulo pi in ``[0, pi)``."""

    theta: float

    def __post_init__(self):
        t = float(self.theta) % math.pi
        # fmod can return exactly pi for tiny negative inputs
        if t >= math.pi:
            t = 0.0
        object.__setattr__(self, "theta", t)

    def __float__(self) -> float:
        return self.theta


def project_onto_segment(p, l: LineSegment) -> tuple[float, Point2, float]:
    """Project ``p`` onto segment ``l``.

    Returns ``(t_star, foot, sq_dist)`` where ``t_star`` is the clamped
    projection parameter and ``sq_dist`` the squared distance to the foot.
    """
    px, py = p
    x1, y1, x2, y2 = l.coords
    dx = x2 - x1
    dy = y2 - y1
    den = dx * dx + dy * dy
    if den == 0.0:
        raise GeometryError("zero-length segment")
    t = ((px - x1) * dx + (py - y1) * dy) / den
    t = min(max(t, 0.0), 1.0)
    fx = x1 + t * dx
    fy = y1 + t * dy
    ex = fx - px
    ey = fy - py
    return t, Point2(fx, fy), ex * ex + ey * ey


def attraction_vector(p, l: LineSegment) -> tuple[float, float]:
    """Vector from ``p`` to its closest point on ``l``."""
    px, py = p
    _, foot, _ = project_onto_segment(p, l)
    return (foot.x - px, foot.y - py)


def normal_angle(a: Sequence[float]) -> float:
    ax, ay = a
    if ax == 0.0 and ay == 0.0:
        raise GeometryError("normal undefined for zero attraction")
    return math.atan2(ay, ax)


def tangent_direction(a: Sequence[float]) -> Direction:
    """Line direction implied by an attraction vector (normal rotated by pi/2)."""
    return Direction(normal_angle(a) + math.pi / 2)


def angular_distance(d1, d2) -> float:
    """Distance between two undirected directions, in ``[0, pi/2]``."""
    diff = abs(_theta(d1) - _theta(d2))
    return min(diff, math.pi - diff)


def circular_mean(dirs, weights=None) -> Direction:
    """Weighted mean of undirected directions via the doubled-angle trick."""
    thetas = [_theta(d) for d in dirs]
    if not thetas:
        raise GeometryError("mean direction undefined for empty input")
    if weights is None:
        weights = [1.0] * len(thetas)
    elif len(weights) != len(thetas):
        raise GeometryError("weights and directions differ in length")
    s = c = 0.0
    for t, w in zip(thetas, weights):
        if w < 0:
            raise GeometryError("weights must be non-negative")
        s += w * math.sin(2.0 * t)
        c += w * math.cos(2.0 * t)
    if math.hypot(s, c) < 1e-12 * max(1.0, sum(weights)):
        raise GeometryError("mean direction undefined")
    return Direction(0.5 * math.atan2(s, c))
