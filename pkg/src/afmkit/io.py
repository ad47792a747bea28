"""Annotation JSON, the AFM binary format, CSV output and synthetic scenes.

Annotation schema (UTF-8 JSON)::

    {"width": W, "height": H, "segments": [[x1, y1, x2, y2], ...],
     "scores": [s1, ...]}          # "scores" optional

AFM file layout (little-endian)::

    magic      4 bytes   b"AFM1"
    height     uint32
    width      uint32
    flags      uint8     bit 0 size-normalized, bit 1 stretched (implies bit 0)
    payload    H*W*2 float32, row-major, a_x then a_y per pixel
"""

from __future__ import annotations

import csv
import io as _stdio
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geom import LatticeDims, LineSegment, LineSegmentMap
from .partition import AFMState, AttractionFieldMap

AFM_MAGIC = b"AFM1"
_HEADER = struct.Struct("<4sIIB")
FLAG_NORMALIZED = 0b01
FLAG_STRETCHED = 0b10

_STATE_FLAGS = {
    AFMState.RAW: 0,
    AFMState.SIZE_NORMALIZED: FLAG_NORMALIZED,
    AFMState.STRETCHED: FLAG_NORMALIZED | FLAG_STRETCHED,
}
_FLAG_STATES = {v: k for k, v in _STATE_FLAGS.items()}


class FormatError(ValueError):
    """Malformed or invalid file content."""


# -- annotations -------------------------------------------------------------

def _num(v: float) -> str:
    return "%.17g" % v


def read_annotation(data: bytes | str) -> LineSegmentMap:
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"malformed JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise FormatError("annotation must be a JSON object")
    try:
        width, height, raw = doc["width"], doc["height"], doc["segments"]
    except KeyError as exc:
        raise FormatError(f"missing field {exc.args[0]!r}") from None
    for name, v in (("width", width), ("height", height)):
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise FormatError(f"{name} must be a positive integer")
    if not isinstance(raw, list):
        raise FormatError("segments must be a list")

    segments = []
    for i, seg in enumerate(raw):
        if (not isinstance(seg, list) or len(seg) != 4
                or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in seg)):
            raise FormatError(f"segment at index {i} must be a list of 4 numbers")
        x1, y1, x2, y2 = (float(c) for c in seg)
        if not all(math.isfinite(c) for c in (x1, y1, x2, y2)):
            raise FormatError(f"non-finite coordinate at index {i}")
        if not (0 <= x1 <= width and 0 <= x2 <= width and 0 <= y1 <= height and 0 <= y2 <= height):
            raise FormatError(f"coordinate out of range at index {i}")
        if x1 == x2 and y1 == y2:
            raise FormatError(f"zero-length segment at index {i}")
        segments.append(LineSegment.from_coords(x1, y1, x2, y2))

    scores = doc.get("scores")
    if scores is not None:
        if not isinstance(scores, list) or len(scores) != len(segments):
            raise FormatError("scores must be a list matching segments")
        scores = [float(s) for s in scores]
    return LineSegmentMap(LatticeDims(width, height), segments, scores)


def write_annotation(lsm: LineSegmentMap) -> bytes:
    segs = ", ".join("[" + ", ".join(_num(c) for c in s.coords) + "]" for s in lsm.segments)
    text = f'{{"width": {lsm.dims.width}, "height": {lsm.dims.height}, "segments": [{segs}]'
    if lsm.scores is not None:
        text += ', "scores": [' + ", ".join(_num(s) for s in lsm.scores) + "]"
    return (text + "}\n").encode("utf-8")


def load_annotation(path) -> LineSegmentMap:
    return read_annotation(Path(path).read_bytes())


def save_annotation(lsm: LineSegmentMap, path) -> None:
    Path(path).write_bytes(write_annotation(lsm))


# -- AFM binary --------------------------------------------------------------

def write_afm(afm: AttractionFieldMap) -> bytes:
    header = _HEADER.pack(AFM_MAGIC, afm.dims.height, afm.dims.width, _STATE_FLAGS[afm.state])
    return header + afm.vectors.astype("<f4").tobytes(order="C")


def read_afm(data: bytes) -> AttractionFieldMap:
    if len(data) < _HEADER.size:
        raise FormatError("truncated AFM header")
    magic, height, width, flags = _HEADER.unpack_from(data)
    if magic != AFM_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if flags not in _FLAG_STATES:
        raise FormatError(f"inconsistent state flags 0b{flags:b}")
    if height < 1 or width < 1:
        raise FormatError("AFM dimensions must be positive")
    expected = height * width * 2 * 4
    payload = data[_HEADER.size:]
    if len(payload) != expected:
        raise FormatError(f"payload is {len(payload)} bytes, expected {expected}")
    vectors = np.frombuffer(payload, dtype="<f4").reshape(height, width, 2).astype(np.float64)
    return AttractionFieldMap(LatticeDims(width, height), vectors, _FLAG_STATES[flags])


def load_afm(path) -> AttractionFieldMap:
    return read_afm(Path(path).read_bytes())


def save_afm(afm: AttractionFieldMap, path) -> None:
    Path(path).write_bytes(write_afm(afm))


# -- CSV ---------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = _stdio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


# -- synthetic scenes --------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    scene_count: int = 1
    dims: LatticeDims = LatticeDims(320, 320)
    segments_per_scene: tuple[int, int] = (2, 30)
    min_length_fraction: float = 0.05
    min_separation: float = 3.0
    max_resample: int = 1000

    def __post_init__(self):
        lo, hi = self.segments_per_scene
        if lo < 1 or hi < lo:
            raise ValueError("segments_per_scene must satisfy 1 <= lo <= hi")
        if not 0 < self.min_length_fraction < 1:
            raise ValueError("min_length_fraction must lie in (0, 1)")
        if self.scene_count < 1:
            raise ValueError("scene_count must be positive")


class SynthError(RuntimeError):
    pass


def generate_scenes(cfg: SynthConfig) -> list[LineSegmentMap]:
    """Random segment maps; endpoints uniform over the pixel-center range.

    Each segment is resampled until it is long enough and its midpoint is at
    least ``min_separation`` away from every earlier midpoint in the scene.
    """
    rng = np.random.default_rng(cfg.seed)
    W, H = cfg.dims.width, cfg.dims.height
    min_len = cfg.min_length_fraction * cfg.dims.diagonal
    lo, hi = cfg.segments_per_scene
    scenes = []
    for k in range(cfg.scene_count):
        count = int(rng.integers(lo, hi + 1))
        coords: list[np.ndarray] = []
        mids: list[np.ndarray] = []
        for i in range(count):
            for _ in range(cfg.max_resample):
                seg = rng.uniform(0.0, 1.0, size=4) * [W - 1, H - 1, W - 1, H - 1]
                if math.hypot(seg[2] - seg[0], seg[3] - seg[1]) < min_len:
                    continue
                mid = (seg[:2] + seg[2:]) / 2
                if all(np.hypot(*(mid - m)) >= cfg.min_separation for m in mids):
                    break
            else:
                raise SynthError(
                    f"scene {k}, segment {i}: no valid segment after {cfg.max_resample} draws")
            coords.append(seg)
            mids.append(mid)
        scenes.append(LineSegmentMap.from_array(cfg.dims, np.array(coords)))
    return scenes
