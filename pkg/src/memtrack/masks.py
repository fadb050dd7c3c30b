"""Binary mask value type and exact set/geometry kernels.

Masks are immutable wrappers around a 2-D boolean numpy array. Every binary
operation checks that both operands have the same dimensions.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy import ndimage

from .errors import ShapeMismatchError

_STRUCTURES = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


class BinaryMask:
    """Row-major boolean pixel grid of shape (height, width)."""

    __slots__ = ("_data", "_count")

    def __init__(self, data) -> None:
        arr = np.array(data, dtype=bool, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"mask must be a non-empty 2-D grid, got shape {arr.shape}")
        arr.flags.writeable = False
        self._data = arr
        self._count: Optional[int] = None

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "BinaryMask":
        # trusted fast path: arr is a fresh bool array nobody else holds
        obj = cls.__new__(cls)
        arr.flags.writeable = False
        obj._data = arr
        obj._count = None
        return obj

    @classmethod
    def empty(cls, height: int, width: int) -> "BinaryMask":
        return cls._wrap(np.zeros((height, width), dtype=bool))

    @classmethod
    def full(cls, height: int, width: int) -> "BinaryMask":
        return cls._wrap(np.ones((height, width), dtype=bool))

    @classmethod
    def from_bits(cls, width: int, height: int, bits: Iterable) -> "BinaryMask":
        flat = np.fromiter((bool(b) for b in bits), dtype=bool)
        if flat.size != width * height:
            raise ValueError(f"bits length {flat.size} != {width}x{height}")
        return cls._wrap(flat.reshape(height, width))

    @property
    def data(self) -> np.ndarray:
        """Read-only (height, width) boolean view."""
        return self._data

    @property
    def width(self) -> int:
        return self._data.shape[1]

    @property
    def height(self) -> int:
        return self._data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self._data.shape

    @property
    def bits(self) -> np.ndarray:
        return self._data.ravel()

    @property
    def count(self) -> int:
        if self._count is None:
            self._count = int(np.count_nonzero(self._data))
        return self._count

    def is_empty(self) -> bool:
        return self.count == 0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._data, other._data))

    def __hash__(self) -> int:
        return hash((self.shape, self._data.tobytes()))

    def __repr__(self) -> str:
        return f"BinaryMask({self.height}x{self.width}, count={self.count})"

    def issubset(self, other: "BinaryMask") -> bool:
        _check_same(self, other)
        return not np.any(self._data & ~other._data)


@dataclass(frozen=True)
class BBox:
    """Inclusive pixel box."""

    row_min: int
    col_min: int
    row_max: int
    col_max: int

    def __post_init__(self) -> None:
        if self.row_min > self.row_max or self.col_min > self.col_max:
            raise ValueError(f"degenerate box {self}")

    @property
    def area(self) -> int:
        return (self.row_max - self.row_min + 1) * (self.col_max - self.col_min + 1)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.row_min, self.col_min, self.row_max, self.col_max)


def _check_same(a: BinaryMask, b: BinaryMask) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"mask shapes differ: {a.shape} vs {b.shape}")


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """Pixel IoU; two empty masks agree perfectly and score 1.0."""
    _check_same(a, b)
    if a.count == 0 and b.count == 0:
        return 1.0
    inter = int(np.count_nonzero(a.data & b.data))
    return inter / (a.count + b.count - inter)


def intersection_count(a: BinaryMask, b: BinaryMask) -> int:
    _check_same(a, b)
    return int(np.count_nonzero(a.data & b.data))


def union(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_same(a, b)
    return BinaryMask._wrap(a.data | b.data)


def intersect(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_same(a, b)
    return BinaryMask._wrap(a.data & b.data)


def subtract(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    _check_same(a, b)
    return BinaryMask._wrap(a.data & ~b.data)


def complement(m: BinaryMask) -> BinaryMask:
    return BinaryMask._wrap(~m.data)


def union_all(masks: Iterable[BinaryMask], height: int, width: int) -> BinaryMask:
    acc = np.zeros((height, width), dtype=bool)
    for m in masks:
        if m.shape != (height, width):
            raise ShapeMismatchError(f"mask shape {m.shape} != {(height, width)}")
        acc |= m.data
    return BinaryMask._wrap(acc)


def largest_connected_component(m: BinaryMask, connectivity: int = 4) -> BinaryMask:
    """Largest component by pixel count.

    Ties go to the component whose first pixel has the smallest row-major index.
    """
    if connectivity not in _STRUCTURES:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    if m.count == 0:
        return BinaryMask.empty(*m.shape)
    labels, n = ndimage.label(m.data, structure=_STRUCTURES[connectivity])
    if n == 1:
        return m
    flat = labels.ravel()
    sizes = np.bincount(flat, minlength=n + 1)
    sizes[0] = 0
    best = sizes.max()
    candidates = np.flatnonzero(sizes == best)
    if candidates.size > 1:
        ids, first = np.unique(flat, return_index=True)
        first_of = dict(zip(ids.tolist(), first.tolist()))
        label = min(candidates.tolist(), key=first_of.__getitem__)
    else:
        label = int(candidates[0])
    return BinaryMask._wrap(labels == label)


def bounding_box(m: BinaryMask) -> Optional[BBox]:
    if m.count == 0:
        return None
    rows = np.flatnonzero(m.data.any(axis=1))
    cols = np.flatnonzero(m.data.any(axis=0))
    return BBox(int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1]))


def bbox_overlap_ratio(inner: BBox, outer: BBox) -> float:
    """area(inner ∩ outer) / area(outer), inclusive extents."""
    r0 = max(inner.row_min, outer.row_min)
    r1 = min(inner.row_max, outer.row_max)
    c0 = max(inner.col_min, outer.col_min)
    c1 = min(inner.col_max, outer.col_max)
    if r0 > r1 or c0 > c1:
        return 0.0
    return (r1 - r0 + 1) * (c1 - c0 + 1) / outer.area


@functools.lru_cache(maxsize=32)
def _disk(r: int) -> np.ndarray:
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    se = (yy * yy + xx * xx) <= r * r
    se.flags.writeable = False
    return se


def disk(radius: int) -> np.ndarray:
    """Disk structuring element {(i, j): i^2 + j^2 <= r^2} (read-only, cached)."""
    return _disk(int(radius))


def dilate(m: BinaryMask, radius: int) -> BinaryMask:
    if radius <= 0 or m.count == 0:
        return m
    return BinaryMask._wrap(_morph(m.data, radius, dilate=True))


def erode(m: BinaryMask, radius: int) -> BinaryMask:
    if radius <= 0 or m.count == 0:
        return m
    return BinaryMask._wrap(_morph(m.data, radius, dilate=False))


def _morph(data: np.ndarray, radius: int, dilate: bool) -> np.ndarray:
    # work on a padded crop around the set pixels; the frame border counts as background
    h, w = data.shape
    rows = np.flatnonzero(data.any(axis=1))
    cols = np.flatnonzero(data.any(axis=0))
    pad = radius + 1
    r0, r1 = max(rows[0] - pad, 0), min(rows[-1] + pad + 1, h)
    c0, c1 = max(cols[0] - pad, 0), min(cols[-1] + pad + 1, w)
    crop = data[r0:r1, c0:c1]
    se = disk(radius)
    if dilate:
        res = ndimage.binary_dilation(crop, structure=se)
    else:
        res = ndimage.binary_erosion(crop, structure=se, border_value=0)
    out = np.zeros_like(data)
    out[r0:r1, c0:c1] = res
    return out


def translate(m: BinaryMask, drow: int, dcol: int) -> BinaryMask:
    """Shift by (drow, dcol); pixels leaving the frame are dropped."""
    if drow == 0 and dcol == 0:
        return m
    h, w = m.shape
    out = np.zeros((h, w), dtype=bool)
    src_r = slice(max(-drow, 0), min(h - drow, h))
    dst_r = slice(max(drow, 0), min(h + drow, h))
    src_c = slice(max(-dcol, 0), min(w - dcol, w))
    dst_c = slice(max(dcol, 0), min(w + dcol, w))
    if src_r.start < src_r.stop and src_c.start < src_c.stop:
        out[dst_r, dst_c] = m.data[src_r, src_c]
    return BinaryMask._wrap(out)
