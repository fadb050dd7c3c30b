from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from memtrack.masks import BinaryMask

settings.register_profile("default", deadline=None, max_examples=100, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def mask_strategy(h: int = 8, w: int = 8):
    return arrays(np.bool_, (h, w)).map(BinaryMask)


def same_shape_masks(n: int, max_side: int = 10):
    """n masks sharing one random shape."""

    @st.composite
    def build(draw):
        h = draw(st.integers(1, max_side))
        w = draw(st.integers(1, max_side))
        return [draw(arrays(np.bool_, (h, w)).map(BinaryMask)) for _ in range(n)]

    return build()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_mask(rng: np.random.Generator, h: int, w: int, density: float = 0.4) -> BinaryMask:
    return BinaryMask(rng.random((h, w)) < density)


def rect(h: int, w: int, r0: int, r1: int, c0: int, c1: int) -> BinaryMask:
    """Inclusive rectangle on an h x w grid."""
    a = np.zeros((h, w), dtype=bool)
    a[r0 : r1 + 1, c0 : c1 + 1] = True
    return BinaryMask(a)
