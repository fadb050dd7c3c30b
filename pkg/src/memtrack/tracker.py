"""Single-loop, one-prompt, multi-target tracking driver.

Each frame: install any prompts first appearing there, assemble the memory
context for the active policy, ask the proposer for three candidates, pick a
branch, then update the policy's stores.
"""

from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Protocol, Sequence

import numpy as np

from . import hypothesis as hyp
from . import memory as mem
from .errors import InvariantViolation
from .hypothesis import CandidateSet, ClassId, ScoreState, Verdict
from .masks import BinaryMask
from .memory import BankConfig, FifoBank, MemoryBank, MemoryEntry, Source
from .rle import mask_to_text


class PolicyKind(enum.Enum):
    FIFO = "fifo"
    CAM_ONLY = "cam"
    ORM_ONLY = "orm"
    MA_SAM2 = "ma"

    @classmethod
    def parse(cls, name: str) -> "PolicyKind":
        try:
            return cls(name)
        except ValueError:
            valid = ", ".join(p.value for p in cls)
            raise ValueError(f"unknown policy {name!r} (expected one of: {valid})") from None

    @property
    def uses_cumulative(self) -> bool:
        return self in (PolicyKind.CAM_ONLY, PolicyKind.MA_SAM2)

    @property
    def uses_orm(self) -> bool:
        return self in (PolicyKind.ORM_ONLY, PolicyKind.MA_SAM2)


@dataclass(frozen=True)
class Prompt:
    """First-appearance frame and mask per class."""

    entries: Mapping[ClassId, tuple[int, BinaryMask]]

    def __post_init__(self) -> None:
        for c, (frame, m) in self.entries.items():
            if frame < 0:
                raise ValueError(f"prompt for {c!r} has negative frame")
            if m.count == 0:
                raise ValueError(f"prompt mask for {c!r} is empty")

    def classes_at(self, frame: int) -> list[ClassId]:
        return sorted(c for c, (f, _) in self.entries.items() if f == frame)

    def present_at(self, frame: int) -> list[ClassId]:
        return sorted(c for c, (f, _) in self.entries.items() if f <= frame)

    @classmethod
    def from_observations(cls, frames: Sequence) -> "Prompt":
        """Ground-truth mask of each class at its first visible frame."""
        entries: dict[ClassId, tuple[int, BinaryMask]] = {}
        for obs in frames:
            for c, m in obs.gt_masks.items():
                if c not in entries and m.count:
                    entries[c] = (obs.frame_index, m)
        return cls(entries)


class Proposer(Protocol):
    def __call__(self, observation, context: Sequence[MemoryEntry], rng: np.random.Generator) -> CandidateSet: ...


@dataclass(frozen=True)
class FrameRecord:
    frame: int
    branch: int
    verdict: Optional[Verdict]
    context: tuple[int, ...]
    masks: Mapping[ClassId, BinaryMask]
    scores: tuple[float, float, float]

    def to_json(self) -> str:
        return json.dumps(
            {
                "frame": self.frame,
                "branch": self.branch,
                "verdict": None if self.verdict is None else self.verdict.value,
                "context": list(self.context),
                "masks": {c: mask_to_text(self.masks[c]) for c in sorted(self.masks)},
            },
            separators=(",", ":"),
        )


@dataclass
class TrackResult:
    policy: PolicyKind
    records: list[FrameRecord] = field(default_factory=list)
    final_scores: ScoreState = field(default_factory=ScoreState)
    store_writes: Counter = field(default_factory=Counter)
    bank_trace: list[dict] = field(default_factory=list)

    def to_jsonl(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.records)

    def masks_for(self, class_id: ClassId) -> list[Optional[BinaryMask]]:
        return [r.masks.get(class_id) for r in self.records]


def frame_rng(seed: int, frame_index: int) -> np.random.Generator:
    """Per-frame stream so every policy sees the same draws at the same frame."""
    ss = np.random.SeedSequence(entropy=seed & ((1 << 64) - 1), spawn_key=(frame_index,))
    return np.random.Generator(np.random.PCG64(ss))


def install_prompt(bank, prompt: Prompt, frame_index: int):
    """Store the prompt entries whose first appearance is ``frame_index``."""
    for c in prompt.classes_at(frame_index):
        f, m = prompt.entries[c]
        entry = MemoryEntry(f, Source.PROMPT, {c: m})
        bank = mem.install_prompt_entry(bank, c, entry)
    return bank


def _mean(values) -> float:
    values = list(values)
    return sum(values) / len(values) if values else 0.0


def run_sequence(
    frames: Sequence,
    prompt: Prompt,
    policy: PolicyKind,
    cfg: BankConfig,
    proposer: Proposer | Callable,
    seed: int,
    trace_banks: bool = False,
) -> TrackResult:
    if not frames:
        raise ValueError("empty frame sequence")
    n = len(frames)
    for c, (f, _) in prompt.entries.items():
        if not 0 <= f < n:
            raise ValueError(f"prompt for {c!r} at frame {f} outside sequence of {n} frames")

    bank = MemoryBank(cfg)
    fifo = FifoBank.from_config(cfg)
    scores = ScoreState(epsilon=cfg.epsilon)
    result = TrackResult(policy)
    writes = result.store_writes
    prompted_classes = sorted(prompt.entries)

    for t, obs in enumerate(frames):
        frame_index = getattr(obs, "frame_index", t)
        if frame_index != t:
            raise ValueError(f"observation {t} carries frame_index {frame_index}")
        if prompt.classes_at(t):
            bank = install_prompt(bank, prompt, t)
            fifo = install_prompt(fifo, prompt, t)
            writes["prompt"] += len(prompt.classes_at(t))

        if policy is PolicyKind.FIFO:
            context = mem.fifo_context(fifo)
        elif policy is PolicyKind.ORM_ONLY:
            context = mem.orm_fifo_context(bank, fifo)
        else:
            context = mem.assemble_context(bank, t)

        cands = proposer(obs, context, frame_rng(seed, t))
        if not isinstance(cands, CandidateSet) or len(cands.candidates) != hyp.NUM_BRANCHES:
            raise ValueError(f"proposer must return a CandidateSet of {hyp.NUM_BRANCHES} candidates")
        missing = set(prompted_classes) - cands.candidates[0].classes
        if missing:
            raise ValueError(f"proposer output at frame {t} lacks prompted class(es) {sorted(missing)}")

        present = prompt.present_at(t)
        if policy.uses_cumulative:
            scores = hyp.update_scores(scores, cands, present)
            branch = hyp.select_branch(scores)
        else:
            branch = hyp.greedy_branch(cands, present)
        chosen = cands.candidates[branch]
        shape = next(iter(chosen.class_masks.values())).shape
        out_masks = {
            c: (chosen.class_masks[c] if c in present else BinaryMask.empty(*shape)) for c in prompted_classes
        }
        conf = _mean(chosen.confidence[c] for c in present)
        piou = _mean(chosen.predicted_iou[c] for c in present)

        verdict: Optional[Verdict] = None
        gate_ok = False
        if present and policy is not PolicyKind.FIFO:
            if policy.uses_orm:
                ref = hyp.refine_candidates(cands, present, cfg.theta_iou, cfg.band_lo, cfg.band_hi)
                gate_ok = ref.primary_index is not None
                if gate_ok:
                    verdict = ref.verdict.kind
                    if verdict is Verdict.INTERFERENCE and t not in bank.orm_frames:
                        # the frame's committed result is what gets remembered; M_f only drives the verdict
                        entry = MemoryEntry(t, Source.ORM, out_masks, conf, piou, interference_flag=True)
                        bank = mem.orm_insert(bank, entry)
                        writes["orm"] += 1
            else:
                gate_ok = hyp.select_primary(cands, present, cfg.theta_iou) is not None

        if policy is PolicyKind.FIFO or policy is PolicyKind.ORM_ONLY:
            fifo = mem.fifo_update(fifo, MemoryEntry(t, Source.FIFO, out_masks, conf, piou))
            writes["fifo"] += 1
        else:
            if gate_ok and verdict is not Verdict.INTERFERENCE:
                entry = MemoryEntry(t, Source.CAM, out_masks, conf, piou)
                if mem.cam_admit(entry, bank):
                    bank = mem.cam_insert(bank, entry)
                    writes["cam"] += 1
            bank = mem.set_recent(bank, MemoryEntry(t, Source.RECENT, out_masks, conf, piou))
            writes["recent"] += 1

        if policy is not PolicyKind.FIFO:
            mem.check_bank(bank)
        if trace_banks:
            state = mem.bank_state(fifo if policy is PolicyKind.FIFO else bank)
            if policy is PolicyKind.ORM_ONLY:
                state = {"prompt": state["prompt"], "orm": state["orm"], "fifo": [e.frame_index for e in fifo.queue]}
            result.bank_trace.append({"frame": t, **state})

        if policy is PolicyKind.MA_SAM2 and present and branch != hyp.select_branch(scores):
            raise InvariantViolation("chosen branch diverged from the cumulative score argmax")
        result.records.append(
            FrameRecord(t, branch, verdict, tuple(e.frame_index for e in context), out_masks, scores.cumulative)
        )

    result.final_scores = scores
    return result
