from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given

import oracles
from conftest import same_shape_masks
from memtrack.masks import BinaryMask
from memtrack.rle import RleMask, from_text, mask_from_text, mask_to_text, rle_decode, rle_encode, to_text


def test_examples():
    assert rle_encode(BinaryMask.empty(2, 2)).runs == (4,)
    assert rle_encode(BinaryMask.full(2, 2)).runs == (0, 4)
    m = BinaryMask.from_bits(3, 2, [0, 1, 1, 0, 0, 1])
    assert to_text(rle_encode(m)) == "3 2 1 2 2 1"


def test_round_trip_seeded():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        m = BinaryMask(rng.random((64, 64)) < rng.random())
        r = rle_encode(m)
        assert rle_decode(r) == m
        assert list(r.runs) == oracles.rle_runs(m.bits.tolist())


@given(same_shape_masks(1, max_side=12))
def test_text_round_trip(ms):
    (m,) = ms
    line = mask_to_text(m)
    assert mask_from_text(line) == m
    assert all(v > 0 for v in from_text(line).runs[1:])


def test_decode_rejects_bad_sums():
    with pytest.raises(ValueError):
        RleMask(2, 2, (1, 2))
    with pytest.raises(ValueError):
        mask_from_text("2 2 1 2")
    with pytest.raises(ValueError):
        mask_from_text("2 2 x 4")
    with pytest.raises(ValueError):
        RleMask(2, 2, (1, 0, 3))
