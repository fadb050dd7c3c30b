"""Regenerate the builtin scenario fixtures under src/memtrack/scenarios/."""

from __future__ import annotations

import json
import math
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "memtrack" / "scenarios"


def target(cid, length, radius, waypoints, visible, z):
    return {
        "class_id": cid,
        "shape": {"length": length, "radius": radius},
        "waypoints": [[int(f), round(r, 3), round(c, 3), round(a, 4)] for f, r, c, a in waypoints],
        "visible": [list(v) for v in visible],
        "z_order": z,
    }


def wander(f0, f1, row, col, angle, amp, step=10, phase=0.0, rot=0.05):
    """Slow small-amplitude wander around a pose, one waypoint every ``step`` frames."""
    out = []
    for f in range(f0, f1 + 1, step):
        ph = phase + 2 * math.pi * (f - f0) / 90.0
        out.append((f, row + amp * math.sin(ph), col + amp * math.cos(1.3 * ph), angle + rot * math.sin(0.7 * ph)))
    if out[-1][0] != f1:
        out.append((f1, row, col, angle))
    return out


def reappearance():
    # A slides along its own axis to a work site, is withdrawn over frames 60-119 and comes
    # back to the same spot, away from where it was first prompted
    ang_a, ang_b = 0.9, -0.2
    a = [(0, 30 - 30 * math.sin(ang_a), 70 - 30 * math.cos(ang_a), ang_a), (40, 30, 70, ang_a)]
    a += wander(45, 199, 30, 70, ang_a, 0.5, phase=0.4, rot=0.01)
    b = wander(0, 199, 74, 34, ang_b, 0.5, phase=1.7, rot=0.01)
    return {
        "name": "reappearance",
        "dims": [96, 128],
        "frame_count": 200,
        "targets": [
            target("A", 30, 5, a, [(0, 60), (120, 200)], 1),
            target("B", 30, 5, b, [(0, 200)], 0),
        ],
    }


def slide(pose, dist):
    """Pose moved ``dist`` px along its own axis."""
    r, c, a = pose
    return (r + dist * math.sin(a), c + dist * math.cos(a), a)


def keyframes(steps):
    """(frame, pose) pairs; consecutive equal poses give a dwell, differing ones a move."""
    return [(f, *pose) for f, pose in steps]


def overlap():
    # A lies still; B is brought in lying across A at right angles, rests there, is withdrawn,
    # and comes back to the same crossing with the stacking reversed
    a = wander(0, 359, 64, 64, 0.0, 0.3, phase=0.3, rot=0.005)
    b = wander(0, 359, 64, 56, math.pi / 2, 0.3, phase=2.1, rot=0.005)
    return {
        "name": "overlap",
        "dims": [128, 128],
        "frame_count": 360,
        "targets": [
            target("A", 70, 3, a, [(0, 360)], [[0, 0], [185, 2]]),
            target("B", 50, 4, b, [(20, 170), (200, 360)], 1),
        ],
    }


def drift():
    n = 600
    # instruments that rest, slide slowly along their own axis, and are withdrawn for a
    # while at a spot away from where they were first prompted; they never touch
    a1 = (30, 28, 0.35)
    a2 = slide(a1, 24)
    b1 = (98, 100, -2.6)
    b2 = slide(b1, 24)
    c1 = (96, 26, 1.2)
    c2 = slide(c1, -20)
    a = keyframes([(0, a1), (100, a1), (148, a2), (420, a2), (468, a1)])
    b = keyframes([(0, b1), (60, b1), (108, b2)])
    c = keyframes([(0, c1), (140, c1), (180, c2), (330, c2), (370, c1)])
    return {
        "name": "drift",
        "dims": [128, 128],
        "frame_count": n,
        "targets": [
            target("A", 34, 5, a, [(0, 220), (245, 520), (540, n)], 1),
            target("B", 30, 5, b, [(0, n)], 2),
            target("C", 28, 5, c, [(0, 240), (262, n)], 0),
        ],
    }


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for fn in (reappearance, overlap, drift):
        data = fn()
        (OUT / f"{data['name']}.json").write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")
        print("wrote", data["name"])


if __name__ == "__main__":
    main()
