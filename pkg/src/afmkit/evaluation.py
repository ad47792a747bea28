"""Pixel-level precision/recall scoring, threshold sweeps and duality checks."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geom import LatticeDims, LineSegmentMap
from .partition import AFMState, AttractionFieldMap, encode_afm
from .squeeze import SqueezeConfig, squeeze

SWEEP_STEP = 0.02
SWEEP_POINTS = 50


@dataclass(frozen=True)
class PRPoint:
    threshold: float | None
    precision: float
    recall: float
    f_measure: float


@dataclass(frozen=True)
class PRCurve:
    points: tuple[PRPoint, ...]

    def __len__(self):
        return len(self.points)

    def rows(self):
        return [(p.threshold, p.precision, p.recall, p.f_measure) for p in self.points]


@dataclass(frozen=True)
class DualityReport:
    scales: tuple[tuple[float, float, float], ...]  # (scale, precision, recall)

    def rows(self):
        return list(self.scales)

    @property
    def mean_precision(self) -> float:
        return float(np.mean([p for _, p, _ in self.scales]))

    @property
    def mean_recall(self) -> float:
        return float(np.mean([r for _, _, r in self.scales]))


@dataclass(frozen=True)
class MagnitudeHistogram:
    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]

    def rows(self):
        return [(self.bin_edges[i], self.bin_edges[i + 1], c) for i, c in enumerate(self.counts)]


@dataclass(frozen=True)
class MatchCounts:
    matched_pred: int
    n_pred: int
    matched_gt: int
    n_gt: int

    def __add__(self, other: "MatchCounts") -> "MatchCounts":
        return MatchCounts(self.matched_pred + other.matched_pred, self.n_pred + other.n_pred,
                           self.matched_gt + other.matched_gt, self.n_gt + other.n_gt)

    def pr_point(self, threshold=None) -> PRPoint:
        p = self.matched_pred / self.n_pred if self.n_pred else 0.0
        r = self.matched_gt / self.n_gt if self.n_gt else 0.0
        return PRPoint(threshold, p, r, f_measure(p, r))


def f_measure(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def rasterize_segments(lsm: LineSegmentMap) -> set[tuple[int, int]]:
    """Digitize segments: unit arc-length samples plus the end point, rounded."""
    W, H = lsm.dims.width, lsm.dims.height
    pixels: set[tuple[int, int]] = set()
    for seg in lsm.segments:
        x1, y1, x2, y2 = seg.coords
        length = seg.length
        t = np.append(np.arange(math.floor(length) + 1) / length, 1.0)
        xs = np.clip(np.floor(x1 + t * (x2 - x1) + 0.5), 0, W - 1).astype(int)
        ys = np.clip(np.floor(y1 + t * (y2 - y1) + 0.5), 0, H - 1).astype(int)
        pixels.update(zip(xs.tolist(), ys.tolist()))
    return pixels


def match_radius(dims: LatticeDims) -> float:
    return 0.01 * dims.diagonal


def _as_array(pixels) -> np.ndarray:
    return np.array(sorted(pixels), dtype=np.int64).reshape(-1, 2)


def candidate_pairs(pred: np.ndarray, gt: np.ndarray, radius: float):
    """All ``(i, j, squared_distance)`` with ``|pred[i] - gt[j]| <= radius``."""
    if len(pred) == 0 or len(gt) == 0:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0, np.int64)
    tp, tg = cKDTree(pred), cKDTree(gt)
    lists = tp.query_ball_tree(tg, radius + 1e-6)
    ii = np.repeat(np.arange(len(pred)), [len(l) for l in lists])
    jj = np.fromiter((j for l in lists for j in l), dtype=np.int64, count=len(ii))
    d2 = ((pred[ii] - gt[jj]) ** 2).sum(axis=1)
    # pixel coordinates are integers, so compare squared distances exactly
    keep = d2 <= radius * radius
    return ii[keep], jj[keep], d2[keep]


MATCH_METHODS = ("optimal", "greedy", "any")


def _greedy(ii, jj, d2, n_left, n_right):
    """Match pairs in ascending distance order; returns left->right (-1 free)."""
    order = np.lexsort((jj, ii, d2))
    match_l = [-1] * n_left
    match_r = [-1] * n_right
    for i, j in zip(ii[order].tolist(), jj[order].tolist()):
        if match_l[i] < 0 and match_r[j] < 0:
            match_l[i] = j
            match_r[j] = i
    return match_l, match_r


def _hopcroft_karp(adj, match_l, match_r) -> int:
    """Grow a matching to maximum cardinality with shortest augmenting paths."""
    n_left = len(adj)
    inf = n_left + 1
    while True:
        # BFS layering from free left vertices
        dist = [inf] * n_left
        queue = [u for u in range(n_left) if match_l[u] < 0]
        for u in queue:
            dist[u] = 0
        found = False
        head = 0
        while head < len(queue):
            u = queue[head]
            head += 1
            for v in adj[u]:
                w = match_r[v]
                if w < 0:
                    found = True
                elif dist[w] == inf:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        if not found:
            break
        # iterative DFS along the layers
        ptr = [0] * n_left
        for root in range(n_left):
            if match_l[root] >= 0:
                continue
            stack = [root]
            path_v = []
            while stack:
                u = stack[-1]
                advanced = False
                while ptr[u] < len(adj[u]):
                    v = adj[u][ptr[u]]
                    ptr[u] += 1
                    w = match_r[v]
                    if w < 0:
                        path_v.append(v)
                        for uu, vv in zip(stack, path_v):
                            match_l[uu] = vv
                            match_r[vv] = uu
                        stack = []
                        advanced = True
                        break
                    if dist[w] == dist[u] + 1:
                        path_v.append(v)
                        stack.append(w)
                        advanced = True
                        break
                if not advanced:
                    dist[u] = inf
                    stack.pop()
                    if path_v:
                        path_v.pop()
    return sum(1 for v in match_l if v >= 0)


def match_pixels(pred, gt, dims: LatticeDims, method: str = "optimal") -> tuple[int, int]:
    """Count matched predicted / ground-truth pixels within 1% of the diagonal.

    ``optimal`` is a maximum-cardinality one-to-one matching over all pairs
    within the radius (greedy start, then augmenting paths). ``greedy`` walks
    pairs in ascending distance (ties by pixel order) and matches whenever both
    ends are free. ``any`` counts a pixel as matched if any pixel of the other
    set is within the radius.
    """
    if method not in MATCH_METHODS:
        raise ValueError(f"unknown match method {method!r}")
    P, G = _as_array(pred), _as_array(gt)
    ii, jj, d2 = candidate_pairs(P, G, match_radius(dims))
    if method == "any":
        return len(np.unique(ii)), len(np.unique(jj))
    match_l, match_r = _greedy(ii, jj, d2, len(P), len(G))
    if method == "greedy":
        n = sum(1 for v in match_l if v >= 0)
        return n, n
    adj = [[] for _ in range(len(P))]
    for i, j in zip(ii.tolist(), jj.tolist()):
        adj[i].append(j)
    n = _hopcroft_karp(adj, match_l, match_r)
    return n, n


def match_counts(pred: LineSegmentMap, gt: LineSegmentMap, method: str = "optimal") -> MatchCounts:
    if pred.dims != gt.dims:
        raise ValueError(f"dims mismatch: {pred.dims} vs {gt.dims}")
    pp, gp = rasterize_segments(pred), rasterize_segments(gt)
    mp, mg = match_pixels(pp, gp, gt.dims, method)
    return MatchCounts(mp, len(pp), mg, len(gp))


def precision_recall(pred: LineSegmentMap, gt: LineSegmentMap, method: str = "optimal") -> PRPoint:
    return match_counts(pred, gt, method).pr_point()


def sweep_thresholds() -> list[float]:
    return [round((k + 1) * SWEEP_STEP, 10) for k in range(SWEEP_POINTS)]


def sweep_scored(scored: LineSegmentMap, gt: LineSegmentMap, method: str = "optimal") -> PRCurve:
    """Threshold an aspect-ratio-scored detection set at 0.02, 0.04, ..., 1.0."""
    scores = scored.scores or ()
    points = []
    for tau in sweep_thresholds():
        kept = scored.select(i for i, s in enumerate(scores) if s < tau)
        points.append(match_counts(kept, gt, method).pr_point(tau))
    return PRCurve(tuple(points))


def pr_sweep(afm: AttractionFieldMap, gt: LineSegmentMap, cfg: SqueezeConfig | None = None,
             method: str = "optimal") -> PRCurve:
    afm.require(AFMState.RAW)
    cfg = replace(cfg or SqueezeConfig(), aspect_ratio_max=1.0)
    return sweep_scored(squeeze(afm, cfg), gt, method)


def roundtrip_counts(lsm: LineSegmentMap, scale: float, cfg: SqueezeConfig,
                     method: str = "optimal") -> MatchCounts:
    """Encode the scaled map, squeeze it back, and score against the scaled map."""
    gt = lsm.scaled(scale) if scale != 1.0 else lsm
    pred = squeeze(encode_afm(gt), cfg)
    return match_counts(pred, gt, method)


def _roundtrip_job(args):
    return roundtrip_counts(*args)


def verify_duality(corpus: Sequence[LineSegmentMap], scales: Sequence[float],
                   cfg: SqueezeConfig | None = None, workers: int = 1,
                   method: str = "optimal") -> DualityReport:
    """Micro-averaged precision/recall of encode->squeeze at each scale."""
    cfg = cfg or SqueezeConfig()
    if not corpus:
        raise ValueError("duality check needs a non-empty corpus")
    scales = [float(s) for s in scales]
    if any(s <= 0 for s in scales):
        raise ValueError("scales must be positive")
    if any(b <= a for a, b in zip(scales, scales[1:])):
        raise ValueError("scales must be strictly increasing")

    jobs = [(lsm, s, cfg, method) for s in scales for lsm in corpus]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_roundtrip_job, jobs, chunksize=4))
    else:
        results = [_roundtrip_job(j) for j in jobs]

    rows = []
    for k, s in enumerate(scales):
        total = MatchCounts(0, 0, 0, 0)
        for c in results[k * len(corpus):(k + 1) * len(corpus)]:
            total = total + c
        pt = total.pr_point()
        rows.append((s, pt.precision, pt.recall))
    return DualityReport(tuple(rows))


def afm_l1(a: AttractionFieldMap, b: AttractionFieldMap) -> float:
    if a.dims != b.dims:
        raise ValueError(f"dims mismatch: {a.dims} vs {b.dims}")
    if a.state is not b.state:
        raise ValueError(f"state mismatch: {a.state.value} vs {b.state.value}")
    return float(np.abs(a.vectors - b.vectors).sum())


def magnitude_histogram(afms: Iterable[AttractionFieldMap], bins: int = 50) -> MagnitudeHistogram:
    """Histogram of ``|a| / min(H, W)`` over every pixel of every map."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    mags = []
    for afm in afms:
        afm.require(AFMState.RAW)
        v = afm.vectors
        mags.append((np.hypot(v[..., 0], v[..., 1]) / min(afm.dims.width, afm.dims.height)).ravel())
    if not mags:
        raise ValueError("magnitude histogram needs at least one AFM")
    allm = np.concatenate(mags)
    top = float(allm.max())
    counts, edges = np.histogram(allm, bins=bins, range=(0.0, top if top > 0 else 1.0))
    return MagnitudeHistogram(tuple(edges.tolist()), tuple(int(c) for c in counts))
