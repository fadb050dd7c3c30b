"""Segmentation metrics and the four-policy ablation.

* Challenge IoU: per frame, mean IoU over classes present in that frame's
  ground truth; frames without ground-truth classes are skipped; mean over
  frames, as a percentage.
* IoU: as Challenge IoU, but each frame's class set also includes classes
  the prediction hallucinates (nonempty prediction, empty ground truth).
* mcIoU: mean over ground-truth classes of the dataset-accumulated class IoU
  (sum of intersections over sum of unions).
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import masks as mk
from .hypothesis import ClassId
from .masks import BinaryMask
from .memory import BankConfig
from .synth import ProposerParams, ScenarioScript, SyntheticProposer, render_scenario
from .tracker import PolicyKind, Prompt, TrackResult, run_sequence

log = logging.getLogger(__name__)

POLICY_ORDER = (PolicyKind.FIFO, PolicyKind.CAM_ONLY, PolicyKind.ORM_ONLY, PolicyKind.MA_SAM2)
POLICY_LABELS = {
    PolicyKind.FIFO: "SAM2",
    PolicyKind.CAM_ONLY: "+ CAM",
    PolicyKind.ORM_ONLY: "+ ORM",
    PolicyKind.MA_SAM2: "+ CAM + ORM",
}
CSV_HEADER = ("policy", "scenario", "seed", "challenge_iou", "iou", "mciou")


@dataclass(frozen=True)
class MetricReport:
    challenge_iou: float
    iou: float
    mciou: float
    per_class: Mapping[ClassId, float] = field(default_factory=dict)
    frames_evaluated: int = 0

    def __post_init__(self) -> None:
        for v in (self.challenge_iou, self.iou, self.mciou, *self.per_class.values()):
            if not 0.0 <= v <= 100.0 + 1e-9:
                raise ValueError(f"percentage {v} outside [0, 100]")


def _pred_lookup(pred: Optional[BinaryMask], gt: BinaryMask) -> BinaryMask:
    return pred if pred is not None else BinaryMask.empty(*gt.shape)


def class_iou(pred: Sequence[Optional[BinaryMask]], gt: Sequence[BinaryMask]) -> Optional[float]:
    """Accumulated IoU of one class over a sequence; None when every frame is empty in both."""
    if len(pred) != len(gt):
        raise ValueError(f"sequence lengths differ: {len(pred)} vs {len(gt)}")
    inter = uni = 0
    for p, g in zip(pred, gt):
        p = _pred_lookup(p, g)
        i = mk.intersection_count(p, g)
        inter += i
        uni += p.count + g.count - i
    if uni == 0:
        return None
    return inter / uni


def _gt_masks(obs) -> Mapping[ClassId, BinaryMask]:
    return obs.gt_masks if hasattr(obs, "gt_masks") else obs


def _pred_masks(rec) -> Mapping[ClassId, BinaryMask]:
    return rec.masks if hasattr(rec, "masks") else rec


def _frame_means(result, gt: Sequence, penalize_hallucination: bool) -> list[float]:
    records = result.records if isinstance(result, TrackResult) else list(result)
    if len(records) != len(gt):
        raise ValueError(f"result has {len(records)} frames, ground truth {len(gt)}")
    values = []
    for rec, obs in zip(records, gt):
        pred, truth = _pred_masks(rec), _gt_masks(obs)
        classes = {c for c, m in truth.items() if m.count}
        if penalize_hallucination:
            classes |= {c for c, m in pred.items() if m is not None and m.count}
        if not classes:
            continue
        per = []
        for c in sorted(classes):
            g = truth.get(c)
            p = pred.get(c)
            if g is None:
                g = BinaryMask.empty(*p.shape)
            per.append(mk.iou(_pred_lookup(p, g), g))
        values.append(sum(per) / len(per))
    return values


def challenge_iou(result, gt: Sequence) -> float:
    values = _frame_means(result, gt, penalize_hallucination=False)
    if not values:
        raise ValueError("no frame contains a ground-truth class")
    return 100.0 * sum(values) / len(values)


def iou_metric(result, gt: Sequence) -> float:
    if not _frame_means(result, gt, penalize_hallucination=False):
        raise ValueError("no frame contains a ground-truth class")
    values = _frame_means(result, gt, penalize_hallucination=True)
    return 100.0 * sum(values) / len(values)


def per_class_iou(result, gt: Sequence) -> dict[ClassId, float]:
    records = result.records if isinstance(result, TrackResult) else list(result)
    if len(records) != len(gt):
        raise ValueError(f"result has {len(records)} frames, ground truth {len(gt)}")
    truths = [_gt_masks(o) for o in gt]
    preds = [_pred_masks(r) for r in records]
    gt_classes = sorted({c for t in truths for c, m in t.items() if m.count})
    out = {}
    for c in gt_classes:
        g_seq = []
        p_seq = []
        for t, p in zip(truths, preds):
            shape = next(iter(t.values())).shape
            g_seq.append(t.get(c) or BinaryMask.empty(*shape))
            p_seq.append(p.get(c))
        v = class_iou(p_seq, g_seq)
        if v is not None:
            out[c] = 100.0 * v
    return out


def mciou(result, gt: Sequence) -> float:
    per = per_class_iou(result, gt)
    return sum(per.values()) / len(per) if per else 0.0


def evaluate(result, gt: Sequence) -> MetricReport:
    per = per_class_iou(result, gt)
    frames = _frame_means(result, gt, penalize_hallucination=False)
    return MetricReport(
        challenge_iou=challenge_iou(result, gt),
        iou=iou_metric(result, gt),
        mciou=sum(per.values()) / len(per) if per else 0.0,
        per_class=per,
        frames_evaluated=len(frames),
    )


# ------------------------------------------------------------------- ablation


@dataclass(frozen=True)
class Cell:
    policy: PolicyKind
    scenario: str
    seed: int
    report: MetricReport


@dataclass
class AblationTable:
    cells: list[Cell]
    rows: dict[PolicyKind, MetricReport]
    per_scenario: dict[str, dict[PolicyKind, MetricReport]]
    # (policy, scenario, seed, error text) for cells that raised; empty on a clean sweep
    failures: list[tuple[str, str, int, str]] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.failures)

    def to_csv(self, header_comment: Optional[str] = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for cell in sorted(self.cells, key=lambda c: (c.policy.value, c.scenario, c.seed)):
            r = cell.report
            w.writerow(
                [cell.policy.value, cell.scenario, cell.seed, f"{r.challenge_iou:.4f}", f"{r.iou:.4f}", f"{r.mciou:.4f}"]
            )
        return buf.getvalue()

    def to_json(self, header: Optional[Mapping] = None) -> str:
        def rep(r: MetricReport) -> dict:
            return {k: v for k, v in asdict(r).items()}

        payload = {}
        if header:
            payload["header"] = dict(header)
        payload["aggregate"] = {p.value: rep(self.rows[p]) for p in POLICY_ORDER if p in self.rows}
        payload["per_scenario"] = {
            s: {p.value: rep(rows[p]) for p in POLICY_ORDER if p in rows} for s, rows in sorted(self.per_scenario.items())
        }
        return json.dumps(payload, indent=2, sort_keys=False)

    def format_table(self) -> str:
        lines = [f"{'Method':<14}{'Challenge IoU':>15}{'IoU':>10}{'mcIoU':>10}", "-" * 49]
        for p in POLICY_ORDER:
            if p in self.rows:
                r = self.rows[p]
                lines.append(f"{POLICY_LABELS[p]:<14}{r.challenge_iou:>15.2f}{r.iou:>10.2f}{r.mciou:>10.2f}")
        return "\n".join(lines) + "\n"


def aggregate_reports(reports: Sequence[MetricReport]) -> MetricReport:
    """Unweighted mean over cells; per-class values averaged over the cells that report the class."""
    if not reports:
        raise ValueError("nothing to aggregate")
    per: dict[ClassId, list[float]] = {}
    for r in reports:
        for c, v in r.per_class.items():
            per.setdefault(c, []).append(v)
    n = len(reports)
    return MetricReport(
        challenge_iou=sum(r.challenge_iou for r in reports) / n,
        iou=sum(r.iou for r in reports) / n,
        mciou=sum(r.mciou for r in reports) / n,
        per_class={c: sum(v) / len(v) for c, v in sorted(per.items())},
        frames_evaluated=sum(r.frames_evaluated for r in reports),
    )


class CellError(RuntimeError):
    def __init__(self, policy: PolicyKind, scenario: str, seed: int, cause: BaseException):
        super().__init__(f"cell (policy={policy.value}, scenario={scenario}, seed={seed}) failed: {cause}")
        self.policy, self.scenario, self.seed = policy, scenario, seed


_RENDER_CACHE: dict[int, tuple] = {}


def _rendered(script: ScenarioScript):
    key = id(script)
    hit = _RENDER_CACHE.get(key)
    if hit is None or hit[0] is not script:
        frames = render_scenario(script)
        hit = (script, frames, Prompt.from_observations(frames))
        _RENDER_CACHE[key] = hit
    return hit[1], hit[2]


def run_cell(
    script: ScenarioScript,
    scenario: str,
    policy: PolicyKind,
    seed: int,
    cfg: BankConfig,
    params: ProposerParams,
) -> Cell:
    try:
        frames, prompt = _rendered(script)
        result = run_sequence(frames, prompt, policy, cfg, SyntheticProposer(params), seed)
        return Cell(policy, scenario, seed, evaluate(result, frames))
    except Exception as exc:
        raise CellError(policy, scenario, seed, exc) from exc


def _run_cells_worker(args) -> list:
    # failures come back as plain tuples; exceptions with custom constructors do not pickle cleanly
    script, scenario, seed, policies, cfg, params = args
    out: list = []
    for p in policies:
        try:
            out.append(run_cell(script, scenario, p, seed, cfg, params))
        except CellError as exc:
            cause = exc.__cause__
            out.append((p.value, scenario, seed, f"{type(cause).__name__}: {cause}"))
    return out


def run_ablation(
    scenarios: Mapping[str, ScenarioScript],
    seeds: Sequence[int],
    cfg: Optional[BankConfig] = None,
    params: Optional[ProposerParams] = None,
    policies: Sequence[PolicyKind] = POLICY_ORDER,
    jobs: int = 1,
    strict: bool = True,
) -> AblationTable:
    """Run every (scenario, seed, policy) cell and aggregate per policy.

    With ``strict`` the first failed cell raises ``CellError``; otherwise
    failures are collected on the table and aggregates cover the cells that
    finished.
    """
    if not scenarios or not seeds:
        raise ValueError("need at least one scenario and one seed")
    cfg = cfg or BankConfig()
    params = params or ProposerParams()
    tasks = [(scenarios[s], s, seed, tuple(policies), cfg, params) for s in sorted(scenarios) for seed in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            batches = list(pool.map(_run_cells_worker, tasks))
    else:
        batches = [_run_cells_worker(t) for t in tasks]
    flat = [c for b in batches for c in b]
    failures = sorted(c for c in flat if isinstance(c, tuple))
    if failures and strict:
        p, s, seed, msg = failures[0]
        raise CellError(PolicyKind.parse(p), s, seed, RuntimeError(msg))
    cells = sorted((c for c in flat if isinstance(c, Cell)), key=lambda c: (c.policy.value, c.scenario, c.seed))

    def agg(sel):
        reports = [c.report for c in cells if sel(c)]
        return aggregate_reports(reports) if reports else None

    rows = {p: r for p in policies if (r := agg(lambda c: c.policy is p)) is not None}
    per_scenario = {}
    for s in sorted(scenarios):
        got = {p: agg(lambda c: c.policy is p and c.scenario == s) for p in policies}
        per_scenario[s] = {p: r for p, r in got.items() if r is not None}
    log.info("ablation finished: %d cells, %d failed", len(cells), len(failures))
    return AblationTable(cells, rows, per_scenario, failures)


def ordering_checks(table: AblationTable, min_gain: float = 3.0) -> list[tuple[str, bool]]:
    """Directional checks on aggregate Challenge IoU."""
    r = {p: table.rows[p].challenge_iou for p in table.rows}
    checks = []
    pairs = [
        (PolicyKind.MA_SAM2, PolicyKind.ORM_ONLY),
        (PolicyKind.ORM_ONLY, PolicyKind.CAM_ONLY),
        (PolicyKind.CAM_ONLY, PolicyKind.FIFO),
    ]
    for hi, lo in pairs:
        if hi in r and lo in r:
            checks.append((f"{POLICY_LABELS[hi]} >= {POLICY_LABELS[lo]} ({r[hi]:.2f} vs {r[lo]:.2f})", r[hi] >= r[lo]))
    if PolicyKind.MA_SAM2 in r and PolicyKind.FIFO in r:
        gain = r[PolicyKind.MA_SAM2] - r[PolicyKind.FIFO]
        checks.append((f"{POLICY_LABELS[PolicyKind.MA_SAM2]} - SAM2 >= {min_gain:.1f} ({gain:.2f})", gain >= min_gain))
    return checks
