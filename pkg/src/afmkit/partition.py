"""Forward transform: segments -> region-partition map -> attraction field map.

Also the pointwise size-normalization and log-stretching transforms used to
make AFM values dimensionless and well conditioned.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .geom import GeometryError, LatticeDims, LineSegmentMap

STRETCH_EPS = 1e-6


class AFMStateError(ValueError):
    """An AFM was passed to an operation expecting a different state."""


class AFMState(enum.Enum):
    RAW = "raw"
    SIZE_NORMALIZED = "size_normalized"
    STRETCHED = "stretched"


@dataclass(frozen=True)
class RegionPartitionMap:
    dims: LatticeDims
    labels: np.ndarray  # (H, W) int, index of the nearest segment

    def region(self, i: int) -> np.ndarray:
        """Boolean mask of the pixels assigned to segment ``i``."""
        return self.labels == i


@dataclass(frozen=True)
class AttractionFieldMap:
    dims: LatticeDims
    vectors: np.ndarray  # (H, W, 2) float64, last axis (x, y)
    state: AFMState = AFMState.RAW

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.shape != (self.dims.height, self.dims.width, 2):
            raise ValueError(
                f"vector grid shape {v.shape} does not match {self.dims.height}x{self.dims.width}x2")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "vectors", v)

    def require(self, state: AFMState) -> None:
        if self.state is not state:
            raise AFMStateError(f"expected AFM in state {state.value}, got {self.state.value}")

    def with_vectors(self, vectors, state: AFMState) -> "AttractionFieldMap":
        return AttractionFieldMap(self.dims, vectors, state)


def _nearest_segment(lsm: LineSegmentMap):
    if not lsm.segments:
        raise GeometryError("partition undefined for empty map")
    H, W = lsm.dims.height, lsm.dims.width
    py, px = np.mgrid[0:H, 0:W].astype(np.float64)
    best = np.full((H, W), np.inf)
    labels = np.zeros((H, W), dtype=np.int64)
    fx_best = np.zeros((H, W))
    fy_best = np.zeros((H, W))
    # same operation order as geom.project_onto_segment so results agree bitwise
    for i, (x1, y1, x2, y2) in enumerate(lsm.as_array()):
        dx = x2 - x1
        dy = y2 - y1
        den = dx * dx + dy * dy
        if den == 0.0:
            raise GeometryError(f"zero-length segment at index {i}")
        t = ((px - x1) * dx + (py - y1) * dy) / den
        np.clip(t, 0.0, 1.0, out=t)
        fx = x1 + t * dx
        fy = y1 + t * dy
        ex = fx - px
        ey = fy - py
        d = ex * ex + ey * ey
        closer = d < best  # strict: ties stay with the lower index
        best[closer] = d[closer]
        labels[closer] = i
        fx_best[closer] = fx[closer]
        fy_best[closer] = fy[closer]
    return labels, fx_best - px, fy_best - py


def region_partition(lsm: LineSegmentMap) -> RegionPartitionMap:
    labels, _, _ = _nearest_segment(lsm)
    return RegionPartitionMap(lsm.dims, labels)


def encode_afm(lsm: LineSegmentMap) -> AttractionFieldMap:
    """Attraction field of ``lsm``: per-pixel vector to the nearest segment."""
    _, ax, ay = _nearest_segment(lsm)
    return AttractionFieldMap(lsm.dims, np.stack([ax, ay], axis=-1), AFMState.RAW)


def _size_scale(dims: LatticeDims) -> np.ndarray:
    return np.array([dims.width, dims.height], dtype=np.float64)


def size_normalize(afm: AttractionFieldMap) -> AttractionFieldMap:
    afm.require(AFMState.RAW)
    return afm.with_vectors(afm.vectors / _size_scale(afm.dims), AFMState.SIZE_NORMALIZED)


def size_denormalize(afm: AttractionFieldMap) -> AttractionFieldMap:
    afm.require(AFMState.SIZE_NORMALIZED)
    return afm.with_vectors(afm.vectors * _size_scale(afm.dims), AFMState.RAW)


def stretch_values(z, eps: float = STRETCH_EPS) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if np.any(np.abs(z) > 1.0 - eps):
        raise ValueError(f"stretch requires |z| <= 1 - {eps}; got max |z| = {np.abs(z).max()}")
    return -np.sign(z) * np.log(np.abs(z) + eps)


def unstretch_values(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    return np.sign(z) * np.exp(-np.abs(z))


def stretch(afm: AttractionFieldMap) -> AttractionFieldMap:
    afm.require(AFMState.SIZE_NORMALIZED)
    return afm.with_vectors(stretch_values(afm.vectors), AFMState.STRETCHED)


def unstretch(afm: AttractionFieldMap) -> AttractionFieldMap:
    afm.require(AFMState.STRETCHED)
    return afm.with_vectors(unstretch_values(afm.vectors), AFMState.SIZE_NORMALIZED)


def remove_stretch_offset(z, eps: float = STRETCH_EPS) -> np.ndarray:
    """Drop the ``eps`` that ``unstretch(stretch(z))`` adds to ``|z|``."""
    z = np.asarray(z, dtype=np.float64)
    return np.sign(z) * np.maximum(np.abs(z) - eps, 0.0)


def to_raw(afm: AttractionFieldMap) -> AttractionFieldMap:
    """Undo stretching and size normalization, whichever are applied.

    Stretched input is unstretched and then has the ``eps`` offset removed, so
    near-zero components come back as (near) zero instead of ``+-eps * W``.
    """
    if afm.state is AFMState.STRETCHED:
        afm = unstretch(afm)
        afm = afm.with_vectors(remove_stretch_offset(afm.vectors), afm.state)
    if afm.state is AFMState.SIZE_NORMALIZED:
        afm = size_denormalize(afm)
    return afm
