"""Memory stores: prompt entries, occlusion-resilient (ORM) deque, context-aware
(CAM) store, a recent-frame slot, and the FIFO baseline.

Banks are frozen values; every operation returns a new bank.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

from .errors import InvariantViolation
from .masks import BinaryMask
from .hypothesis import ClassId


class Source(enum.Enum):
    PROMPT = "prompt"
    ORM = "orm"
    CAM = "cam"
    RECENT = "recent"
    FIFO = "fifo"


@dataclass(frozen=True)
class MemoryEntry:
    frame_index: int
    source: Source
    class_masks: Mapping[ClassId, BinaryMask]
    avg_confidence: float = 1.0
    avg_predicted_iou: float = 1.0
    interference_flag: bool = False

    def __post_init__(self) -> None:
        if self.frame_index < 0:
            raise ValueError("frame_index must be nonnegative")
        if self.interference_flag and self.source is not Source.ORM:
            raise ValueError("only ORM entries may carry the interference flag")
        if len({m.shape for m in self.class_masks.values()}) > 1:
            raise ValueError("entry masks disagree on shape")
        for name in ("avg_confidence", "avg_predicted_iou"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    @property
    def quality(self) -> float:
        return (self.avg_confidence + self.avg_predicted_iou) / 2.0


@dataclass(frozen=True)
class BankConfig:
    total_capacity: int = 12
    orm_capacity: int = 5
    cam_conf_threshold: float = 0.75
    cam_iou_threshold: float = 0.80
    theta_iou: float = 0.8
    band_lo: float = 0.6
    band_hi: float = 0.9
    epsilon: float = 1e-6

    def __post_init__(self) -> None:
        if self.total_capacity < 1 or self.orm_capacity < 1:
            raise ValueError("capacities must be positive")
        if self.orm_capacity > self.total_capacity - 2:
            raise ValueError("orm_capacity must leave room for the recent slot and one CAM slot")
        if not 0.0 < self.band_lo < self.band_hi < 1.0:
            raise ValueError("need 0 < band_lo < band_hi < 1")
        for name in ("cam_conf_threshold", "cam_iou_threshold", "theta_iou"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} outside [0, 1]")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def fifo_capacity(self) -> int:
        return self.total_capacity - 1

    def cam_capacity(self, orm_size: int) -> int:
        return self.total_capacity - 2 - orm_size


@dataclass(frozen=True)
class MemoryBank:
    config: BankConfig = field(default_factory=BankConfig)
    prompt_entries: Mapping[ClassId, MemoryEntry] = field(default_factory=dict)
    orm_entries: tuple[MemoryEntry, ...] = ()
    cam_entries: tuple[MemoryEntry, ...] = ()
    recent_entry: Optional[MemoryEntry] = None

    @property
    def prompt_frames(self) -> set[int]:
        return {e.frame_index for e in self.prompt_entries.values()}

    @property
    def orm_frames(self) -> set[int]:
        return {e.frame_index for e in self.orm_entries}


@dataclass(frozen=True)
class FifoBank:
    capacity: int = 11
    prompt_entries: Mapping[ClassId, MemoryEntry] = field(default_factory=dict)
    queue: tuple[MemoryEntry, ...] = ()

    @classmethod
    def from_config(cls, cfg: BankConfig) -> "FifoBank":
        return cls(capacity=cfg.fifo_capacity)


def _with_prompt(prompts: Mapping[ClassId, MemoryEntry], class_id: ClassId, entry: MemoryEntry) -> dict:
    if class_id in prompts:
        raise ValueError(f"prompt for class {class_id!r} already installed")
    if entry.source is not Source.PROMPT:
        raise ValueError("prompt entries must have source PROMPT")
    out = dict(prompts)
    out[class_id] = entry
    return out


def install_prompt_entry(bank, class_id: ClassId, entry: MemoryEntry):
    """Works for both MemoryBank and FifoBank."""
    return replace(bank, prompt_entries=_with_prompt(bank.prompt_entries, class_id, entry))


def _evict_lowest(entries: tuple[MemoryEntry, ...]) -> tuple[MemoryEntry, ...]:
    # lowest mean score goes first; ties go to the oldest frame
    victim = min(entries, key=lambda e: (e.quality, e.frame_index))
    return tuple(e for e in entries if e is not victim)


def _trim_cam(cam: tuple[MemoryEntry, ...], limit: int) -> tuple[MemoryEntry, ...]:
    while len(cam) > max(limit, 0):
        cam = _evict_lowest(cam)
    return cam


def orm_insert(bank: MemoryBank, entry: MemoryEntry) -> MemoryBank:
    if entry.source is not Source.ORM or not entry.interference_flag:
        raise ValueError("ORM accepts only interference-flagged ORM entries")
    if entry.frame_index in bank.orm_frames:
        raise ValueError(f"frame {entry.frame_index} already stored in ORM")
    cfg = bank.config
    orm = bank.orm_entries
    if len(orm) >= cfg.orm_capacity:
        orm = orm[len(orm) - cfg.orm_capacity + 1 :]
    orm = orm + (entry,)
    cam = tuple(e for e in bank.cam_entries if e.frame_index != entry.frame_index)
    cam = _trim_cam(cam, cfg.cam_capacity(len(orm)))
    return replace(bank, orm_entries=orm, cam_entries=cam)


def cam_admit(entry: MemoryEntry, bank: MemoryBank, cfg: Optional[BankConfig] = None) -> bool:
    cfg = cfg or bank.config
    return (
        entry.avg_confidence >= cfg.cam_conf_threshold
        and entry.avg_predicted_iou >= cfg.cam_iou_threshold
        and entry.frame_index not in bank.orm_frames
        and entry.frame_index not in bank.prompt_frames
    )


def cam_insert(bank: MemoryBank, entry: MemoryEntry, cfg: Optional[BankConfig] = None) -> MemoryBank:
    cfg = cfg or bank.config
    if entry.source is not Source.CAM:
        raise ValueError("CAM accepts only CAM entries")
    if any(e.frame_index == entry.frame_index for e in bank.cam_entries):
        raise ValueError(f"frame {entry.frame_index} already stored in CAM")
    cam = _trim_cam(bank.cam_entries + (entry,), cfg.cam_capacity(len(bank.orm_entries)))
    return replace(bank, cam_entries=cam)


def set_recent(bank: MemoryBank, entry: MemoryEntry) -> MemoryBank:
    if entry.source is not Source.RECENT:
        raise ValueError("recent slot accepts only RECENT entries")
    return replace(bank, recent_entry=entry)


def _merged_prompts(prompts: Mapping[ClassId, MemoryEntry]) -> list[MemoryEntry]:
    # one context entry per prompt frame, classes merged
    by_frame: dict[int, dict[ClassId, BinaryMask]] = {}
    for cid in sorted(prompts):
        e = prompts[cid]
        by_frame.setdefault(e.frame_index, {}).update(e.class_masks)
    return [MemoryEntry(f, Source.PROMPT, masks) for f, masks in sorted(by_frame.items())]


def _dedup(entries: list[MemoryEntry]) -> list[MemoryEntry]:
    seen: set[int] = set()
    out = []
    for e in entries:
        if e.frame_index in seen:
            continue
        seen.add(e.frame_index)
        out.append(e)
    return out


def assemble_context(bank: MemoryBank, current_frame: Optional[int] = None) -> list[MemoryEntry]:
    """Prompts, then ORM oldest→newest, then CAM oldest→newest, then the recent slot.

    Later entries repeating an earlier frame index are dropped. ``current_frame``
    excludes anything at or after that frame.
    """
    ordered = _merged_prompts(bank.prompt_entries)
    ordered += list(bank.orm_entries)
    ordered += sorted(bank.cam_entries, key=lambda e: e.frame_index)
    if bank.recent_entry is not None:
        ordered.append(bank.recent_entry)
    if current_frame is not None:
        ordered = [e for e in ordered if e.source is Source.PROMPT or e.frame_index < current_frame]
    return _dedup(ordered)


def fifo_update(bank: FifoBank, entry: MemoryEntry) -> FifoBank:
    queue = bank.queue
    if queue and entry.frame_index <= queue[-1].frame_index:
        raise ValueError("FIFO entries must arrive in increasing frame order")
    if len(queue) >= bank.capacity:
        queue = queue[len(queue) - bank.capacity + 1 :]
    return replace(bank, queue=queue + (entry,))


def fifo_context(bank: FifoBank) -> list[MemoryEntry]:
    return _dedup(_merged_prompts(bank.prompt_entries) + list(bank.queue))


def orm_fifo_context(bank: MemoryBank, fifo: FifoBank) -> list[MemoryEntry]:
    """ORM entries first, remaining unprompted capacity filled by the newest FIFO frames."""
    head = _merged_prompts(bank.prompt_entries) + list(bank.orm_entries)
    taken = {e.frame_index for e in head}
    room = bank.config.fifo_capacity - len(bank.orm_entries)
    tail: list[MemoryEntry] = []
    for e in reversed(fifo.queue):
        if len(tail) >= room:
            break
        if e.frame_index not in taken:
            tail.append(e)
    return _dedup(head + tail[::-1])


def check_bank(bank: MemoryBank) -> None:
    """Raise InvariantViolation if the partition or uniqueness invariants fail."""
    cfg = bank.config
    if len(bank.orm_entries) > cfg.orm_capacity:
        raise InvariantViolation(f"ORM holds {len(bank.orm_entries)} > {cfg.orm_capacity}")
    if len(bank.cam_entries) > cfg.cam_capacity(len(bank.orm_entries)):
        raise InvariantViolation("CAM exceeds the capacity left after ORM")
    orm = [e.frame_index for e in bank.orm_entries]
    cam = [e.frame_index for e in bank.cam_entries]
    if len(set(orm)) != len(orm) or len(set(cam)) != len(cam):
        raise InvariantViolation("duplicate frame inside a store")
    if set(cam) & set(orm) or set(cam) & bank.prompt_frames:
        raise InvariantViolation("CAM frame also stored in ORM or as a prompt")


def bank_state(bank) -> dict:
    """JSON-ready summary of stored frame indices."""
    prompt = sorted(e.frame_index for e in bank.prompt_entries.values())
    if isinstance(bank, FifoBank):
        return {"prompt": prompt, "fifo": [e.frame_index for e in bank.queue]}
    return {
        "prompt": prompt,
        "orm": [e.frame_index for e in bank.orm_entries],
        "cam": [e.frame_index for e in bank.cam_entries],
        "recent": None if bank.recent_entry is None else bank.recent_entry.frame_index,
    }


def bank_state_json(bank) -> str:
    return json.dumps(bank_state(bank), separators=(",", ":"))
