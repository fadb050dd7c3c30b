"""Run-length codec for binary masks.

Runs alternate zeros/ones over the row-major pixel order and always start
with a (possibly zero-length) run of zeros. The text form is one line per
mask: ``W H r0 r1 r2 ...``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .masks import BinaryMask


@dataclass(frozen=True)
class RleMask:
    width: int
    height: int
    runs: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"bad RLE dimensions {self.width}x{self.height}")
        if any(r < 0 for r in self.runs):
            raise ValueError("negative run length")
        if any(r == 0 for r in self.runs[1:]):
            raise ValueError("only the leading zeros run may be empty")
        total = sum(self.runs)
        if total != self.width * self.height:
            raise ValueError(f"run sum {total} != {self.width}x{self.height}")


def rle_encode(m: BinaryMask) -> RleMask:
    flat = m.bits
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return RleMask(m.width, m.height, tuple(runs))


def rle_decode(r: RleMask) -> BinaryMask:
    total = sum(r.runs)
    if total != r.width * r.height:
        raise ValueError(f"run sum {total} != {r.width}x{r.height}")
    values = np.arange(len(r.runs)) % 2 == 1
    flat = np.repeat(values, r.runs)
    return BinaryMask._wrap(flat.reshape(r.height, r.width))


def to_text(r: RleMask) -> str:
    return " ".join(str(v) for v in (r.width, r.height, *r.runs))


def from_text(line: str) -> RleMask:
    parts = line.split()
    if len(parts) < 3:
        raise ValueError(f"RLE line needs 'W H runs...', got {line!r}")
    try:
        nums = [int(p) for p in parts]
    except ValueError as exc:
        raise ValueError(f"non-integer token in RLE line {line!r}") from exc
    return RleMask(nums[0], nums[1], tuple(nums[2:]))


def mask_to_text(m: BinaryMask) -> str:
    return to_text(rle_encode(m))


def mask_from_text(line: str) -> BinaryMask:
    return rle_decode(from_text(line))
