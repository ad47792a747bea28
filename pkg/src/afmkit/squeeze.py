"""Inverse transform: contract an attraction field map back to line segments.

Pipeline: optional magnitude-based outlier removal, a line proposal map that
buckets every attraction vector by the rounded lattice cell of its foot point,
greedy angular region growing over that map, and a principal-axis rectangle
fit whose aspect ratio decides whether the grown region is a line segment.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .geom import Direction, LatticeDims, LineSegment, LineSegmentMap, Point2
from .partition import AFMState, AttractionFieldMap

# attraction vectors shorter than this carry no usable direction
ZERO_ATTRACTION = 1e-9
# supports shorter than this along their axis have collapsed to a point
MIN_EXTENT = 1e-3

ACTIVE, USED, DISCARDED = 1, 2, 0

SEED_ORDERS = ("magnitude", "raster")


class SqueezeConfigError(ValueError):
    pass


class FitError(ValueError):
    """Support set cannot be fitted by a rectangle."""


@dataclass(frozen=True)
class SqueezeConfig:
    tau: float = math.radians(10.0)
    window: int = 3
    aspect_ratio_max: float = 0.2
    min_support: int = 2
    outlier_gamma_fraction: float = 0.02
    remove_outliers: bool = True
    deterministic_order: bool = True
    seed_order: str = "magnitude"
    seed: int = 0

    def __post_init__(self):
        if self.seed_order not in SEED_ORDERS:
            raise SqueezeConfigError(f"seed_order must be one of {SEED_ORDERS}")
        if not 0.0 < self.tau < math.pi / 2:
            raise SqueezeConfigError("tau must lie in (0, pi/2)")
        if self.window < 1 or self.window % 2 == 0:
            raise SqueezeConfigError("window must be a positive odd integer")
        if not 0.0 < self.aspect_ratio_max <= 1.0:
            raise SqueezeConfigError("aspect_ratio_max must lie in (0, 1]")
        if self.min_support < 1:
            raise SqueezeConfigError("min_support must be positive")
        if self.outlier_gamma_fraction <= 0:
            raise SqueezeConfigError("outlier_gamma_fraction must be positive")


@dataclass(frozen=True)
class ProposalEntry:
    source_pixel: tuple[int, int]
    attraction: tuple[float, float]
    foot: Point2
    tangent: Direction


@dataclass
class LineProposalMap:
    """Sparse map from lattice cells to the attraction vectors landing there.

    Entries are stored column-wise in parallel arrays, ordered by source pixel
    (row-major). ``cells`` maps a cell ``(x, y)`` to entry indices.
    """

    dims: LatticeDims
    source: np.ndarray     # (N, 2) int
    attraction: np.ndarray  # (N, 2) float
    foot: np.ndarray       # (N, 2) float
    tangent: np.ndarray    # (N,) float in [0, pi)
    cell: np.ndarray       # (N, 2) int
    cells: dict = field(default_factory=dict)
    _tangent_list: list | None = field(default=None, repr=False)

    def tangents(self) -> list[float]:
        # plain floats: per-element numpy indexing dominates the growth loop otherwise
        if self._tangent_list is None:
            self._tangent_list = self.tangent.tolist()
        return self._tangent_list

    def __len__(self) -> int:
        return len(self.tangent)

    def entry(self, i: int) -> ProposalEntry:
        return ProposalEntry(
            source_pixel=(int(self.source[i, 0]), int(self.source[i, 1])),
            attraction=(float(self.attraction[i, 0]), float(self.attraction[i, 1])),
            foot=Point2(float(self.foot[i, 0]), float(self.foot[i, 1])),
            tangent=Direction(float(self.tangent[i])),
        )

    def candidates(self, q) -> list[int]:
        return self.cells.get((int(q[0]), int(q[1])), [])


@dataclass(frozen=True)
class FittedRectangle:
    endpoint_a: Point2
    endpoint_b: Point2
    width: float
    support_size: int

    @property
    def length(self) -> float:
        return math.hypot(self.endpoint_b.x - self.endpoint_a.x, self.endpoint_b.y - self.endpoint_a.y)

    @property
    def aspect_ratio(self) -> float:
        return self.width / self.length


def remove_outliers(afm: AttractionFieldMap, gamma_fraction: float = 0.02):
    """Keep the vectors whose norm is at most ``gamma_fraction * min(H, W)``.

    Returns ``(pixels, vectors)``: an ``(N, 2)`` int array of ``(x, y)`` and the
    matching ``(N, 2)`` attraction vectors, in row-major pixel order.
    """
    afm.require(AFMState.RAW)
    if gamma_fraction <= 0:
        raise SqueezeConfigError("gamma_fraction must be positive")
    gamma = gamma_fraction * min(afm.dims.width, afm.dims.height)
    norms = np.hypot(afm.vectors[..., 0], afm.vectors[..., 1])
    ys, xs = np.nonzero(norms <= gamma)
    return np.stack([xs, ys], axis=1), afm.vectors[ys, xs]


def all_vectors(afm: AttractionFieldMap):
    """Every pixel and its vector, in the same layout as ``remove_outliers``."""
    afm.require(AFMState.RAW)
    H, W = afm.dims.height, afm.dims.width
    ys, xs = np.divmod(np.arange(H * W), W)
    return np.stack([xs, ys], axis=1), afm.vectors.reshape(-1, 2)


def build_proposal_map(pixels, vectors, dims: LatticeDims) -> LineProposalMap:
    pixels = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    vectors = np.asarray(vectors, dtype=np.float64).reshape(-1, 2)
    foot = pixels + vectors
    cell = np.floor(foot + 0.5).astype(np.int64)
    inside = ((cell[:, 0] >= 0) & (cell[:, 0] < dims.width)
              & (cell[:, 1] >= 0) & (cell[:, 1] < dims.height))
    # zero vectors have no normal, so they cannot vote for a direction
    inside &= np.hypot(vectors[:, 0], vectors[:, 1]) > ZERO_ATTRACTION
    pixels, vectors, foot, cell = pixels[inside], vectors[inside], foot[inside], cell[inside]
    tangent = np.mod(np.arctan2(vectors[:, 1], vectors[:, 0]) + math.pi / 2, math.pi)
    tangent[tangent >= math.pi] = 0.0

    cells: dict[tuple[int, int], list[int]] = {}
    for i, (cx, cy) in enumerate(cell.tolist()):
        cells.setdefault((cx, cy), []).append(i)
    return LineProposalMap(dims, pixels, vectors, foot, tangent, cell, cells)


def _angdist(a: float, b: float) -> float:
    d = abs(a - b)
    return d if d <= math.pi / 2 else math.pi - d


def grow_region(seed: int | ProposalEntry, proposal: LineProposalMap, status, cfg: SqueezeConfig):
    """Greedy angular region growing from one seed.

    ``seed`` is an entry index (or a free-standing ProposalEntry); ``status`` is
    the mutable per-entry array of ACTIVE/USED/DISCARDED flags and absorbed
    entries are flipped to USED. Returns ``(support, direction)`` where
    ``support`` lists absorbed entry indices in absorption order; an empty list
    means initialization failed.
    """
    if isinstance(seed, ProposalEntry):
        theta0 = seed.tangent.theta
        q = (int(math.floor(seed.foot.x + 0.5)), int(math.floor(seed.foot.y + 0.5)))
        seed_idx = None
    else:
        seed_idx = int(seed)
        theta0 = float(proposal.tangent[seed_idx])
        q = (int(proposal.cell[seed_idx, 0]), int(proposal.cell[seed_idx, 1]))

    tangent = proposal.tangents()
    cells = proposal.cells
    tau = cfg.tau

    # start from the candidate in C(q) best aligned with the seed direction
    cand = [e for e in cells.get(q, ()) if status[e] == ACTIVE]
    if seed_idx is not None and status[seed_idx] == ACTIVE:
        first = seed_idx
    elif cand:
        first = min(cand, key=lambda e: (_angdist(tangent[e], theta0), e))
    else:
        return [], None
    if _angdist(tangent[first], theta0) >= tau:
        return [], None

    status[first] = USED
    support = [first]
    t = tangent[first]
    s2, c2 = math.sin(2 * t), math.cos(2 * t)
    theta = t
    half = cfg.window // 2
    offsets = [(dx, dy) for dy in range(-half, half + 1) for dx in range(-half, half + 1)]
    visited = {q}
    frontier = deque([q])
    while frontier:
        qx, qy = frontier.popleft()
        for dx, dy in offsets:
            nb = (qx + dx, qy + dy)
            entries = cells.get(nb)
            if not entries:
                continue
            for e in entries:
                if status[e] != ACTIVE:
                    continue
                te = tangent[e]
                d = abs(te - theta)
                if d > math.pi / 2:
                    d = math.pi - d
                # also anchored to the initial direction: bounds running-mean drift
                d0 = abs(te - t)
                if d0 > math.pi / 2:
                    d0 = math.pi - d0
                if d < tau and d0 < tau:
                    status[e] = USED
                    support.append(e)
                    s2 += math.sin(2 * te)
                    c2 += math.cos(2 * te)
                    theta = (0.5 * math.atan2(s2, c2)) % math.pi
                    if nb not in visited:
                        visited.add(nb)
                        frontier.append(nb)
    return support, Direction(theta)


def fit_rectangle(points, min_support: int = 2, min_extent: float = MIN_EXTENT) -> FittedRectangle:
    """Principal-axis rectangle around a point set.

    The axis is the dominant eigenvector of the point covariance; endpoints are
    the extreme projections onto it and width is the perpendicular extent.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n < max(min_support, 1):
        raise FitError(f"support of {n} points is below the minimum of {min_support}")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    spread = np.abs(centered).max()
    if spread <= 1e-12 * max(1.0, np.abs(centroid).max()):
        raise FitError("support points are coincident")
    cov = centered.T @ centered
    _, vecs = np.linalg.eigh(cov)
    axis = vecs[:, 1]
    # fix the sign so endpoint order is reproducible
    if axis[0] < 0 or (axis[0] == 0 and axis[1] < 0):
        axis = -axis
    normal = np.array([-axis[1], axis[0]])
    along = centered @ axis
    across = centered @ normal
    lo, hi = along.min(), along.max()
    if hi - lo < min_extent:
        raise FitError(f"support extent {hi - lo:.3g} px along its principal axis is below {min_extent}")
    a = centroid + lo * axis
    b = centroid + hi * axis
    return FittedRectangle(Point2(float(a[0]), float(a[1])), Point2(float(b[0]), float(b[1])),
                           float(across.max() - across.min()), n)


def _seed_order(proposal: LineProposalMap, cfg: SqueezeConfig):
    """Seed visiting order.

    ``magnitude``: shortest attraction first (pixels nearest a line, whose
    vectors are most reliably normal to it), ties in row-major order.
    ``raster``: row-major by source pixel. Non-deterministic mode shuffles.
    """
    n = len(proposal)
    if not cfg.deterministic_order:
        return np.random.default_rng(cfg.seed).permutation(n).tolist()
    if cfg.seed_order == "raster":
        return range(n)
    a = proposal.attraction
    return np.argsort(a[:, 0] * a[:, 0] + a[:, 1] * a[:, 1], kind="stable").tolist()


def squeeze_proposals(proposal: LineProposalMap, cfg: SqueezeConfig) -> LineSegmentMap:
    n = len(proposal)
    status = np.full(n, ACTIVE, dtype=np.int8).tolist()
    failures = [0] * n
    segments, scores = [], []
    for e in _seed_order(proposal, cfg):
        if status[e] != ACTIVE:
            continue
        support, _ = grow_region(e, proposal, status, cfg)
        if not support:
            status[e] = DISCARDED
            continue
        rect = None
        if len(support) >= cfg.min_support:
            try:
                rect = fit_rectangle(proposal.foot[support], cfg.min_support)
            except FitError:
                rect = None
        if rect is not None and rect.aspect_ratio < cfg.aspect_ratio_max:
            segments.append(LineSegment(rect.endpoint_a, rect.endpoint_b))
            scores.append(rect.aspect_ratio)
            continue
        # rejected: release the support, but an entry gets only one second chance
        for s in support:
            failures[s] += 1
            status[s] = ACTIVE if failures[s] < 2 else DISCARDED
        status[e] = DISCARDED
    return LineSegmentMap(proposal.dims, segments, scores)


def squeeze(afm: AttractionFieldMap, cfg: SqueezeConfig | None = None) -> LineSegmentMap:
    """Recover line segments from a raw-state AFM.

    Each returned segment carries its fitted aspect ratio in ``scores``.
    """
    cfg = cfg or SqueezeConfig()
    afm.require(AFMState.RAW)
    if cfg.remove_outliers:
        pixels, vectors = remove_outliers(afm, cfg.outlier_gamma_fraction)
    else:
        pixels, vectors = all_vectors(afm)
    return squeeze_proposals(build_proposal_map(pixels, vectors, afm.dims), cfg)
