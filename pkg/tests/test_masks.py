from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import mask_strategy, random_mask, rect, same_shape_masks
from memtrack import masks as mk
from memtrack.errors import ShapeMismatchError
from memtrack.masks import BBox, BinaryMask


def test_binary_mask_validates_dimensions():
    with pytest.raises(ValueError):
        BinaryMask(np.zeros((0, 3), dtype=bool))
    with pytest.raises(ValueError):
        BinaryMask.from_bits(3, 2, [1, 0, 1])
    m = BinaryMask.from_bits(3, 2, [1, 0, 0, 0, 1, 1])
    assert m.shape == (2, 3) and m.count == 3


def test_mask_is_immutable():
    m = BinaryMask(np.ones((2, 2), dtype=bool))
    with pytest.raises(ValueError):
        m.data[0, 0] = False


def test_iou_examples():
    wide = rect(8, 8, 0, 1, 0, 3)
    tall = rect(8, 8, 0, 3, 0, 1)
    assert mk.iou(wide, wide) == 1.0
    assert mk.iou(rect(8, 8, 0, 0, 0, 0), rect(8, 8, 5, 5, 5, 5)) == 0.0
    expected = oracles.pixel_iou(oracles.to_grid(wide), oracles.to_grid(tall))
    assert expected == pytest.approx(4 / 12)
    assert mk.iou(wide, tall) == pytest.approx(expected, abs=1e-15)
    assert mk.iou(BinaryMask.empty(3, 3), BinaryMask.empty(3, 3)) == 1.0


def test_shape_mismatch_raises():
    with pytest.raises(ShapeMismatchError):
        mk.iou(BinaryMask.empty(2, 3), BinaryMask.empty(3, 2))
    with pytest.raises(ShapeMismatchError):
        mk.union(BinaryMask.empty(2, 2), BinaryMask.empty(2, 3))


def test_set_algebra_examples():
    wide = rect(8, 8, 0, 1, 0, 3)
    tall = rect(8, 8, 0, 3, 0, 1)
    assert mk.subtract(wide, BinaryMask.empty(8, 8)) == wide
    assert mk.intersect(wide, wide) == wide
    assert mk.union(wide, tall).count == 12


@given(same_shape_masks(2))
def test_iou_bounds_and_symmetry(pair):
    a, b = pair
    v = mk.iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == mk.iou(b, a)
    if a.count:
        assert mk.iou(a, a) == 1.0
    assert v == pytest.approx(oracles.pixel_iou(oracles.to_grid(a), oracles.to_grid(b)), abs=1e-12)


def test_subtract_matches_pixel_oracle(rng):
    for _ in range(200):
        a, b = random_mask(rng, 32, 32), random_mask(rng, 32, 32)
        got = mk.subtract(a, b)
        assert got == mk.intersect(a, mk.complement(b))
        ga, gb = oracles.to_grid(a), oracles.to_grid(b)
        want = [[x and not y for x, y in zip(ra, rb)] for ra, rb in zip(ga, gb)]
        assert oracles.to_grid(got) == want


def test_largest_cc_examples():
    blob = rect(6, 6, 1, 3, 1, 3)
    assert mk.largest_connected_component(blob) == blob

    a = np.zeros((6, 8), dtype=bool)
    a[0, 0:5] = True  # 5 px
    a[4, 5:8] = True  # 3 px
    got = mk.largest_connected_component(BinaryMask(a))
    assert got.count == 5 and got.data[0, 0]

    # two 4-pixel blobs on an 8-wide grid: A starts at row-major index 3, B at index 20
    t = np.zeros((6, 8), dtype=bool)
    t[0, 3:7] = True
    t[2, 4:6] = True
    t[3, 4:6] = True
    assert int(np.flatnonzero(t.ravel())[0]) == 3
    got = mk.largest_connected_component(BinaryMask(t))
    assert got.count == 4 and got.data[0, 3] and not got.data[2, 4]
    want = oracles.largest_component(t.tolist())
    assert oracles.to_grid(got) == want

    assert mk.largest_connected_component(BinaryMask.empty(4, 4)).count == 0


@given(mask_strategy(9, 9), st.sampled_from([4, 8]))
def test_largest_cc_matches_flood_fill(m, conn):
    got = mk.largest_connected_component(m, conn)
    grid = oracles.to_grid(m)
    assert oracles.to_grid(got) == oracles.largest_component(grid, conn)
    assert got.issubset(m)
    comps = oracles.components(oracles.to_grid(got), conn)
    assert len(comps) <= 1
    assert all(len(c) <= got.count for c in oracles.components(grid, conn))


def test_bounding_box_examples():
    assert mk.bounding_box(BinaryMask.empty(4, 4)) is None
    single = np.zeros((4, 8), dtype=bool)
    single[2, 5] = True
    assert mk.bounding_box(BinaryMask(single)).as_tuple() == (2, 5, 2, 5)
    assert mk.bounding_box(rect(8, 8, 0, 1, 0, 3)).as_tuple() == (0, 0, 1, 3)


def test_bbox_overlap_ratio_examples():
    b = BBox(0, 0, 3, 3)
    assert mk.bbox_overlap_ratio(b, b) == 1.0
    assert mk.bbox_overlap_ratio(BBox(5, 5, 6, 6), b) == 0.0
    assert mk.bbox_overlap_ratio(BBox(0, 0, 1, 1), BBox(0, 0, 3, 3)) == pytest.approx(4 / 16)


@st.composite
def boxes(draw, side=12):
    r0 = draw(st.integers(0, side - 1))
    r1 = draw(st.integers(r0, side - 1))
    c0 = draw(st.integers(0, side - 1))
    c1 = draw(st.integers(c0, side - 1))
    return BBox(r0, c0, r1, c1)


@given(boxes(), boxes(), boxes())
def test_bbox_ratio_properties(inner, other_inner, outer):
    assert mk.bbox_overlap_ratio(outer, outer) == 1.0
    v = mk.bbox_overlap_ratio(inner, outer)
    assert 0.0 <= v <= 1.0

    def inter_area(a, b):
        h = min(a.row_max, b.row_max) - max(a.row_min, b.row_min) + 1
        w = min(a.col_max, b.col_max) - max(a.col_min, b.col_min) + 1
        return max(h, 0) * max(w, 0)

    # monotone in the intersection area for a fixed outer box
    ia, ib = inter_area(inner, outer), inter_area(other_inner, outer)
    vb = mk.bbox_overlap_ratio(other_inner, outer)
    if ia <= ib:
        assert v <= vb
    assert v == pytest.approx(ia / outer.area)


def test_morphology_and_translate():
    m = rect(9, 9, 4, 4, 4, 4)
    assert mk.dilate(m, 1).count == 5
    assert mk.dilate(m, 2).count == 13
    assert mk.erode(mk.dilate(m, 2), 2) == m
    assert mk.erode(rect(9, 9, 0, 8, 0, 8), 1).count == 49  # frame edge counts as background
    moved = mk.translate(m, 2, -3)
    assert moved.data[6, 1] and moved.count == 1
    assert mk.translate(m, 10, 0).count == 0
    assert mk.disk(1).sum() == 5
