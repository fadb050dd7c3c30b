"""Synthetic surgical-scene generator and noisy three-branch proposer.

Instruments are capsules (a segment of ``length`` pixels thickened by
``radius``) following linearly interpolated waypoints. The proposer degrades
ground truth by an amount controlled by how well the memory context matches
the current frame, so memory policy choices feed back into segmentation
quality.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from importlib import resources
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from . import masks as mk
from .errors import ConfigError
from .hypothesis import NUM_BRANCHES, CandidateMask, CandidateSet, ClassId
from .masks import BinaryMask
from .memory import MemoryEntry

BUILTIN_NAMES = ("reappearance", "overlap", "drift")


@dataclass(frozen=True)
class Target:
    class_id: ClassId
    length: float
    radius: float
    waypoints: tuple[tuple[int, float, float, float], ...]
    visible: tuple[tuple[int, int], ...]
    # either a constant or ((start_frame, z), ...) steps
    z_order: Any = 0

    def z_at(self, frame: int) -> int:
        if isinstance(self.z_order, int):
            return self.z_order
        z = self.z_order[0][1]
        for start, val in self.z_order:
            if frame >= start:
                z = val
        return z

    def is_visible(self, frame: int) -> bool:
        return any(s <= frame < e for s, e in self.visible)

    def pose(self, frame: int) -> tuple[float, float, float]:
        wps = self.waypoints
        if frame <= wps[0][0]:
            return wps[0][1:]
        for (f0, r0, c0, a0), (f1, r1, c1, a1) in zip(wps, wps[1:]):
            if f0 <= frame <= f1:
                t = (frame - f0) / (f1 - f0)
                return (r0 + t * (r1 - r0), c0 + t * (c1 - c0), a0 + t * (a1 - a0))
        return wps[-1][1:]


@dataclass(frozen=True)
class ScenarioScript:
    dims: tuple[int, int]
    frame_count: int
    targets: tuple[Target, ...]
    name: str = ""

    def __post_init__(self) -> None:
        h, w = self.dims
        if h < 1 or w < 1:
            raise ConfigError(f"dims must be positive, got {self.dims}")
        if self.frame_count < 1:
            raise ConfigError("frame_count must be positive")
        ids = [t.class_id for t in self.targets]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate class_id in {ids}")
        for t in self.targets:
            where = f"target {t.class_id!r}"
            if t.length < 0 or t.radius <= 0:
                raise ConfigError(f"{where}: need length >= 0 and radius > 0")
            if not t.waypoints:
                raise ConfigError(f"{where}: no waypoints")
            frames = [wp[0] for wp in t.waypoints]
            if frames[0] != 0:
                raise ConfigError(f"{where}: first waypoint must be at frame 0")
            if any(b <= a for a, b in zip(frames, frames[1:])):
                raise ConfigError(f"{where}: waypoints must be strictly increasing in frame")
            if frames[-1] >= self.frame_count:
                raise ConfigError(f"{where}: waypoint frame {frames[-1]} beyond frame_count {self.frame_count}")
            prev_end = 0
            for s, e in t.visible:
                if not (prev_end <= s < e):
                    raise ConfigError(f"{where}: visibility intervals must be sorted, disjoint, non-empty")
                prev_end = e
            if not isinstance(t.z_order, int):
                starts = [s for s, _ in t.z_order]
                if not starts or starts[0] != 0 or any(b <= a for a, b in zip(starts, starts[1:])):
                    raise ConfigError(f"{where}: z_order steps must start at frame 0 and increase")

    @property
    def class_ids(self) -> list[ClassId]:
        return [t.class_id for t in self.targets]


@dataclass(frozen=True)
class FrameObservation:
    frame_index: int
    gt_masks: Mapping[ClassId, BinaryMask]
    visible_classes: frozenset = frozenset()

    def __post_init__(self) -> None:
        vis = frozenset(c for c, m in self.gt_masks.items() if m.count)
        if self.visible_classes and frozenset(self.visible_classes) != vis:
            raise ValueError("visible_classes must equal the classes with nonempty masks")
        object.__setattr__(self, "visible_classes", vis)


# ---------------------------------------------------------------- scripts I/O


def _req(obj: Mapping, key: str, where: str):
    if key not in obj:
        raise ConfigError(f"{where}: missing field {key!r}")
    return obj[key]


def _strict(obj: Any, allowed: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    extra = set(obj) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {sorted(extra)}")


def script_from_dict(data: Mapping, name: str = "") -> ScenarioScript:
    _strict(data, {"name", "dims", "frame_count", "targets"}, "script")
    dims = _req(data, "dims", "script")
    if not (isinstance(dims, list) and len(dims) == 2):
        raise ConfigError("script.dims: expected [height, width]")
    targets = []
    for i, t in enumerate(_req(data, "targets", "script")):
        where = f"targets[{i}]"
        _strict(t, {"class_id", "shape", "waypoints", "visible", "z_order"}, where)
        shape = _req(t, "shape", where)
        _strict(shape, {"length", "radius"}, f"{where}.shape")
        try:
            wps = tuple((int(f), float(r), float(c), float(a)) for f, r, c, a in _req(t, "waypoints", where))
            vis = tuple((int(s), int(e)) for s, e in _req(t, "visible", where))
            z = t.get("z_order", 0)
            z = int(z) if isinstance(z, (int, float)) else tuple((int(s), int(v)) for s, v in z)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: malformed waypoints/visible/z_order ({exc})") from exc
        targets.append(
            Target(
                class_id=str(_req(t, "class_id", where)),
                length=float(_req(shape, "length", f"{where}.shape")),
                radius=float(_req(shape, "radius", f"{where}.shape")),
                waypoints=wps,
                visible=vis,
                z_order=z,
            )
        )
    return ScenarioScript(
        dims=(int(dims[0]), int(dims[1])),
        frame_count=int(_req(data, "frame_count", "script")),
        targets=tuple(targets),
        name=str(data.get("name", name)),
    )


def script_to_dict(s: ScenarioScript) -> dict:
    return {
        "name": s.name,
        "dims": list(s.dims),
        "frame_count": s.frame_count,
        "targets": [
            {
                "class_id": t.class_id,
                "shape": {"length": t.length, "radius": t.radius},
                "waypoints": [list(w) for w in t.waypoints],
                "visible": [list(v) for v in t.visible],
                "z_order": t.z_order if isinstance(t.z_order, int) else [list(z) for z in t.z_order],
            }
            for t in s.targets
        ],
    }


def load_script(path) -> ScenarioScript:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
    return script_from_dict(data, name=str(path))


def builtin_scenarios() -> dict[str, ScenarioScript]:
    pkg = resources.files("memtrack") / "scenarios"
    out = {}
    for name in BUILTIN_NAMES:
        data = json.loads((pkg / f"{name}.json").read_text(encoding="utf-8"))
        out[name] = script_from_dict(data, name=name)
    return out


# ------------------------------------------------------------------ rendering


def rasterize_capsule(dims: tuple[int, int], row: float, col: float, angle: float, length: float, radius: float) -> np.ndarray:
    """Pixels whose centre lies within ``radius`` of the capsule's core segment."""
    h, w = dims
    half = length / 2.0
    dr, dc = math.sin(angle), math.cos(angle)
    ext = half + radius + 1
    r0, r1 = max(int(math.floor(row - ext)), 0), min(int(math.ceil(row + ext)) + 1, h)
    c0, c1 = max(int(math.floor(col - ext)), 0), min(int(math.ceil(col + ext)) + 1, w)
    out = np.zeros((h, w), dtype=bool)
    if r0 >= r1 or c0 >= c1:
        return out
    rr = np.arange(r0, r1, dtype=float)[:, None] - row
    cc = np.arange(c0, c1, dtype=float)[None, :] - col
    t = np.clip(rr * dr + cc * dc, -half, half)
    d2 = (rr - t * dr) ** 2 + (cc - t * dc) ** 2
    out[r0:r1, c0:c1] = d2 <= radius * radius
    return out


def render_frame(script: ScenarioScript, frame: int) -> FrameObservation:
    h, w = script.dims
    owner = np.full((h, w), -1, dtype=np.int64)
    best_z = np.full((h, w), np.iinfo(np.int64).min, dtype=np.int64)
    for idx, t in enumerate(script.targets):
        if not t.is_visible(frame):
            continue
        r, c, a = t.pose(frame)
        pix = rasterize_capsule(script.dims, r, c, a, t.length, t.radius)
        z = t.z_at(frame)
        # equal z: later target wins (painter's order)
        win = pix & (z >= best_z)
        owner[win] = idx
        best_z[win] = z
    gt = {t.class_id: BinaryMask._wrap(owner == idx) for idx, t in enumerate(script.targets)}
    return FrameObservation(frame, gt)


def render_scenario(script: ScenarioScript) -> list[FrameObservation]:
    return [render_frame(script, f) for f in range(script.frame_count)]


# ------------------------------------------------------------------- proposer


@dataclass(frozen=True)
class ProposerParams:
    # calibrated on the builtin scenarios (README, "Calibration")
    q_min: float = 0.0
    q_max: float = 1.0
    r_max: int = 4
    j_max: int = 4
    p_swap_base: float = 1.0
    p_miss_base: float = 0.2
    sigma_iou: float = 0.05
    sigma_conf: float = 0.05
    branch_offsets: tuple[float, float, float] = (0.05, -0.40, -0.45)

    def __post_init__(self) -> None:
        if not 0.0 <= self.q_min < self.q_max <= 1.0:
            raise ValueError("need 0 <= q_min < q_max <= 1")
        for name in ("p_swap_base", "p_miss_base"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be a probability")
        if self.r_max < 0 or self.j_max < 0 or self.sigma_iou < 0 or self.sigma_conf < 0:
            raise ValueError("radii and noise scales must be nonnegative")
        if len(self.branch_offsets) != NUM_BRANCHES:
            raise ValueError("one offset per branch")
        object.__setattr__(self, "branch_offsets", tuple(float(o) for o in self.branch_offsets))

    @classmethod
    def from_overrides(cls, overrides: Optional[Mapping] = None) -> "ProposerParams":
        overrides = dict(overrides or {})
        known = {f.name for f in fields(cls)}
        extra = set(overrides) - known
        if extra:
            raise ConfigError(f"unknown proposer parameter(s) {sorted(extra)}")
        if "branch_offsets" in overrides:
            overrides["branch_offsets"] = tuple(overrides["branch_offsets"])
        try:
            return cls(**overrides)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"proposer parameters: {exc}") from exc


def _clamp(x: float, lo: float = 0.0, hi: float = 1.0) -> float:
    return lo if x < lo else hi if x > hi else x


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def context_relevance(class_id: ClassId, context: Sequence[MemoryEntry], gt: FrameObservation) -> float:
    """Best IoU between any stored mask of ``class_id`` and the current ground truth."""
    target = gt.gt_masks.get(class_id)
    if target is None or target.count == 0:
        return 0.0
    best = 0.0
    for e in context:
        m = e.class_masks.get(class_id)
        if m is None or m.count == 0:
            continue
        v = mk.iou(m, target)
        if v > best:
            best = v
            if best >= 1.0:
                break
    return best


def overlap_fraction(class_id: ClassId, gt: FrameObservation) -> tuple[float, Optional[ClassId]]:
    """|dilate(gt_c, 2) ∩ others| / |gt_c| and the most-overlapping other class."""
    m = gt.gt_masks[class_id]
    if m.count == 0:
        return 0.0, None
    grown = mk.dilate(m, 2).data
    total = 0
    partner, partner_px = None, 0
    for other in sorted(gt.gt_masks):
        if other == class_id:
            continue
        px = int(np.count_nonzero(grown & gt.gt_masks[other].data))
        total += px
        if px > partner_px:
            partner, partner_px = other, px
    return total / m.count, partner


def branch_quality(rho: float, params: ProposerParams) -> list[float]:
    base = params.q_min + (params.q_max - params.q_min) * rho
    return [_clamp(base + off) for off in params.branch_offsets]


def morph_radius(q: float, params: ProposerParams) -> int:
    return _round_half_up((1.0 - q) * params.r_max)


def jitter_pixels(q: float, params: ProposerParams) -> int:
    return _round_half_up((1.0 - q) * params.j_max)


@dataclass
class SyntheticProposer:
    """Three-branch proposer over synthetic ground truth.

    Per frame and class, one set of uniforms drives all three branches: the
    morphology direction, the jitter direction, the label-swap coin and the
    dropout coin are shared, and branches differ only through their quality
    offsets. A branch drops the class when the shared coin falls below its own
    dropout probability, so a better branch never loses a target that a worse
    branch keeps. Score noise is shared too, so identical masks get identical
    scores and branch rankings reflect real mask differences only.
    """

    params: ProposerParams = field(default_factory=ProposerParams)

    def __call__(self, gt: FrameObservation, context: Sequence[MemoryEntry], rng: np.random.Generator) -> CandidateSet:
        p = self.params
        classes = sorted(gt.gt_masks)
        n = len(classes)
        uniforms = rng.random((n, 4))
        # one calibration draw for the whole frame, shared by classes, branches and both scores
        z = float(rng.standard_normal())
        shape = next(iter(gt.gt_masks.values())).shape
        empty = BinaryMask.empty(*shape)
        flagged = any(e.interference_flag for e in context)

        out_masks = [dict() for _ in range(NUM_BRANCHES)]
        quality: dict[ClassId, list[float]] = {}
        for i, c in enumerate(classes):
            target = gt.gt_masks[c]
            if target.count == 0:
                for k in range(NUM_BRANCHES):
                    out_masks[k][c] = empty
                continue
            qs = branch_quality(context_relevance(c, context, gt), p)
            quality[c] = qs
            grow = uniforms[i, 0] < 0.5
            theta = 2.0 * math.pi * uniforms[i, 1]
            made: dict[tuple[int, int], BinaryMask] = {}
            for k, q in enumerate(qs):
                r, j = morph_radius(q, p), jitter_pixels(q, p)
                if (r, j) not in made:
                    m = mk.dilate(target, r) if grow else mk.erode(target, r)
                    made[r, j] = mk.translate(m, _round_half_up(j * math.sin(theta)), _round_half_up(j * math.cos(theta)))
                out_masks[k][c] = made[r, j]

        swapped: set[ClassId] = set()
        for i, c in enumerate(classes):
            if c not in quality or c in swapped:
                continue
            frac, partner = overlap_fraction(c, gt)
            if partner is None or partner in swapped:
                continue
            prob = min(1.0, p.p_swap_base * frac) * (0.5 if flagged else 1.0)
            if uniforms[i, 2] < prob:
                for k in range(NUM_BRANCHES):
                    out_masks[k][c], out_masks[k][partner] = out_masks[k][partner], out_masks[k][c]
                swapped.update((c, partner))

        for i, c in enumerate(classes):
            if c not in quality:
                continue
            for k, q in enumerate(quality[c]):
                if uniforms[i, 3] < (1.0 - q) * p.p_miss_base:
                    out_masks[k][c] = empty

        candidates = []
        for k in range(NUM_BRANCHES):
            piou, conf = {}, {}
            for i, c in enumerate(classes):
                if c in quality:
                    piou[c] = _clamp(mk.iou(out_masks[k][c], gt.gt_masks[c]) + p.sigma_iou * z)
                    conf[c] = _clamp(quality[c][k] + p.sigma_conf * z)
                else:
                    # absent target: near-zero scores
                    piou[c] = _clamp(p.sigma_iou * abs(z))
                    conf[c] = _clamp(p.sigma_conf * abs(z))
            candidates.append(CandidateMask(out_masks[k], piou, conf))
        return CandidateSet(gt.frame_index, tuple(candidates))
