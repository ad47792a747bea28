"""Attraction field maps: encode line segment maps as dense vector fields and squeeze them back."""

from .geom import (
    Direction,
    GeometryError,
    LatticeDims,
    LineSegment,
    LineSegmentMap,
    Point2,
    angular_distance,
    attraction_vector,
    circular_mean,
    normal_angle,
    project_onto_segment,
)
from .partition import (
    AFMState,
    AFMStateError,
    AttractionFieldMap,
    RegionPartitionMap,
    encode_afm,
    region_partition,
    size_denormalize,
    size_normalize,
    stretch,
    to_raw,
    unstretch,
)
from .squeeze import SqueezeConfig, fit_rectangle, squeeze
from .evaluation import (
    afm_l1,
    magnitude_histogram,
    match_pixels,
    pr_sweep,
    precision_recall,
    rasterize_segments,
    verify_duality,
)

__version__ = "0.1.0"
