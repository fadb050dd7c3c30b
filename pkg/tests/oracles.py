"""Slow, obviously-correct reference implementations used by the tests.

Everything here works on plain nested lists or per-pixel loops and shares no
code with the package.
"""

from __future__ import annotations

import math
from collections import deque


def to_grid(mask) -> list[list[bool]]:
    return [[bool(v) for v in row] for row in mask.data.tolist()]


def count(grid) -> int:
    return sum(sum(1 for v in row if v) for row in grid)


def pixel_iou(a, b) -> float:
    inter = uni = 0
    for ra, rb in zip(a, b):
        for x, y in zip(ra, rb):
            inter += x and y
            uni += x or y
    return 1.0 if uni == 0 else inter / uni


def components(grid, connectivity: int = 4) -> list[list[tuple[int, int]]]:
    """Flood-fill components in row-major discovery order."""
    h, w = len(grid), len(grid[0])
    steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    if connectivity == 8:
        steps += [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    seen = [[False] * w for _ in range(h)]
    out = []
    for r in range(h):
        for c in range(w):
            if not grid[r][c] or seen[r][c]:
                continue
            comp, q = [], deque([(r, c)])
            seen[r][c] = True
            while q:
                y, x = q.popleft()
                comp.append((y, x))
                for dy, dx in steps:
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and grid[ny][nx] and not seen[ny][nx]:
                        seen[ny][nx] = True
                        q.append((ny, nx))
            out.append(comp)
    return out


def largest_component(grid, connectivity: int = 4):
    """Largest component; ties go to the one discovered first in row-major order."""
    h, w = len(grid), len(grid[0])
    comps = components(grid, connectivity)
    out = [[False] * w for _ in range(h)]
    if not comps:
        return out
    best = comps[0]
    for comp in comps[1:]:
        if len(comp) > len(best):
            best = comp
    for y, x in best:
        out[y][x] = True
    return out


def eq2(ms, alts):
    """CC(M_s minus (M_s and M_a)) united with (M_s and M_a), pixel by pixel."""
    h, w = len(ms), len(ms[0])
    ma = [[any(a[r][c] for a in alts) for c in range(w)] for r in range(h)]
    overlap = [[ms[r][c] and ma[r][c] for c in range(w)] for r in range(h)]
    rest = [[ms[r][c] and not ma[r][c] for c in range(w)] for r in range(h)]
    cc = largest_component(rest)
    return [[cc[r][c] or overlap[r][c] for c in range(w)] for r in range(h)]


def capsule_count(dims, row, col, angle, length, radius) -> int:
    """Pixel centres within ``radius`` of the core segment, by per-pixel distance."""
    h, w = dims
    half = length / 2.0
    ax, ay = row - half * math.sin(angle), col - half * math.cos(angle)
    bx, by = row + half * math.sin(angle), col + half * math.cos(angle)
    n = 0
    for r in range(h):
        for c in range(w):
            vx, vy = bx - ax, by - ay
            t = ((r - ax) * vx + (c - ay) * vy) / (vx * vx + vy * vy)
            t = min(1.0, max(0.0, t))
            px, py = ax + t * vx, ay + t * vy
            if (r - px) ** 2 + (c - py) ** 2 <= radius * radius:
                n += 1
    return n


def rle_runs(flat) -> list[int]:
    runs, cur, n = [], False, 0
    for v in flat:
        if v == cur:
            n += 1
        else:
            runs.append(n)
            cur, n = v, 1
    runs.append(n)
    return runs


def frame_mean_iou(preds, gts, penalize: bool) -> float:
    """Challenge IoU (or the hallucination-penalizing IoU) over dicts of grids."""
    vals = []
    for p, g in zip(preds, gts):
        classes = {c for c, m in g.items() if count(m)}
        if penalize:
            classes |= {c for c, m in p.items() if count(m)}
        if not classes:
            continue
        per = []
        for c in sorted(classes):
            shape = next(iter(g.values()))
            blank = [[False] * len(shape[0]) for _ in shape]
            per.append(pixel_iou(p.get(c, blank), g.get(c, blank)))
        vals.append(sum(per) / len(per))
    return 100.0 * sum(vals) / len(vals)
