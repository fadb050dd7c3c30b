"""Command-line front end.

Subcommands:

    memtrack render SCRIPT --out DIR          ground-truth dump of a scenario
    memtrack run --config run.json            one tracked sequence plus metrics
    memtrack ablate [--config ablate.json]    policy x scenario x seed sweep
    memtrack eval RESULT GT                   metrics from dumped files

Configs are strict JSON objects; unknown keys are errors. Every output file
starts with a header carrying the hash of the effective configuration, so a
file can always be traced back to the settings that produced it.

Exit codes: 0 success, 2 user or configuration error, 3 internal invariant
violation (including failed ablation cells).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

from .errors import ConfigError, InvariantViolation
from .masks import BinaryMask
from .memory import BankConfig
from .metrics import POLICY_ORDER, AblationTable, Cell, evaluate, ordering_checks, run_ablation
from .rle import mask_from_text, mask_to_text
from .synth import (
    BUILTIN_NAMES,
    ProposerParams,
    ScenarioScript,
    SyntheticProposer,
    builtin_scenarios,
    load_script,
    render_scenario,
    script_to_dict,
)
from .tracker import PolicyKind, Prompt, run_sequence

log = logging.getLogger("memtrack")

EXIT_OK, EXIT_USER, EXIT_INVARIANT = 0, 2, 3

RUN_KEYS = {"scenario", "policy", "seed", "bank", "proposer", "out_dir"}
ABLATE_KEYS = {"scenarios", "policies", "seeds", "bank", "proposer", "out_dir"}
DEFAULT_SEEDS = tuple(range(10))


# ------------------------------------------------------------------ helpers


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(effective: Mapping) -> str:
    return hashlib.sha256(canonical_json(effective).encode()).hexdigest()[:16]


def read_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


def _check_keys(data: Mapping, allowed: set, where: str) -> None:
    extra = set(data) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {sorted(extra)}")


def bank_from_overrides(overrides: Optional[Mapping]) -> BankConfig:
    if overrides is not None and not isinstance(overrides, dict):
        raise ConfigError("bank: expected an object")
    overrides = dict(overrides or {})
    _check_keys(overrides, {f.name for f in fields(BankConfig)}, "bank")
    try:
        return BankConfig(**overrides)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bank: {exc}") from exc


def proposer_from_overrides(overrides: Optional[Mapping]) -> ProposerParams:
    if overrides is not None and not isinstance(overrides, dict):
        raise ConfigError("proposer: expected an object")
    return ProposerParams.from_overrides(overrides)


def parse_policy(name: Any) -> PolicyKind:
    if not isinstance(name, str):
        raise ConfigError(f"policy must be a string, got {name!r}")
    try:
        return PolicyKind.parse(name)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_seed(value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < 1 << 64:
        raise ConfigError(f"seed must be an integer in [0, 2**64), got {value!r}")
    return value


def resolve_scenario(ref: Any) -> tuple[str, ScenarioScript]:
    """Builtin name or path to a script file -> (label, script)."""
    if not isinstance(ref, str) or not ref:
        raise ConfigError(f"scenario must be a builtin name or a path, got {ref!r}")
    if ref in BUILTIN_NAMES:
        return ref, builtin_scenarios()[ref]
    path = Path(ref)
    if not path.is_file():
        raise ConfigError(f"scenario {ref!r} is neither a builtin ({', '.join(BUILTIN_NAMES)}) nor a file")
    return path.stem, load_script(path)


def out_dir(args: argparse.Namespace, data: Mapping) -> Path:
    value = args.out if args.out is not None else data.get("out_dir", ".")
    if not isinstance(value, str) or not value:
        raise ConfigError(f"out_dir must be a nonempty string, got {value!r}")
    return Path(value)


def _header(kind: str, chash: str, **extra) -> str:
    return canonical_json({"config_hash": chash, "kind": kind, **extra}) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


def _metrics_csv(cell: Cell, chash: str) -> str:
    return AblationTable([cell], {}, {}).to_csv(header_comment=f"config_hash={chash}")


# ------------------------------------------------------------------ render


def gt_jsonl(frames, class_ids: Sequence[str]) -> str:
    lines = []
    for obs in frames:
        masks = {c: mask_to_text(obs.gt_masks[c]) for c in sorted(class_ids)}
        lines.append(json.dumps({"frame": obs.frame_index, "masks": masks}, separators=(",", ":")))
    return "".join(line + "\n" for line in lines)


def cmd_render(args: argparse.Namespace) -> int:
    name, script = resolve_scenario(args.script)
    effective = {"command": "render", "scenario": name, "script": script_to_dict(script)}
    chash = config_hash(effective)
    frames = render_scenario(script)
    out = Path(args.out or ".")
    _write(out / "gt.jsonl", _header("gt", chash, scenario=name) + gt_jsonl(frames, script.class_ids))
    print(f"{name}: {len(frames)} frames -> {out / 'gt.jsonl'}")
    return EXIT_OK


# --------------------------------------------------------------------- run


def run_effective(data: Mapping, args: argparse.Namespace) -> tuple[dict, ScenarioScript, PolicyKind, BankConfig, ProposerParams]:
    _check_keys(data, RUN_KEYS, "run config")
    if "scenario" not in data:
        raise ConfigError("run config: missing key 'scenario'")
    name, script = resolve_scenario(data["scenario"])
    policy = parse_policy(args.policy if args.policy is not None else data.get("policy", "ma"))
    seed = parse_seed(args.seed if args.seed is not None else data.get("seed", 0))
    cfg = bank_from_overrides(data.get("bank"))
    params = proposer_from_overrides(data.get("proposer"))
    effective = {
        "command": "run",
        "scenario": name,
        "script": script_to_dict(script),
        "policy": policy.value,
        "seed": seed,
        "bank": asdict(cfg),
        "proposer": asdict(params),
    }
    return effective, script, policy, cfg, params


def cmd_run(args: argparse.Namespace) -> int:
    data = read_config(args.config)
    effective, script, policy, cfg, params = run_effective(data, args)
    chash = config_hash(effective)
    out = out_dir(args, data)
    frames = render_scenario(script)
    result = run_sequence(
        frames, Prompt.from_observations(frames), policy, cfg, SyntheticProposer(params), effective["seed"], trace_banks=True
    )
    report = evaluate(result, frames)
    meta = {"policy": policy.value, "scenario": effective["scenario"], "seed": effective["seed"]}

    _write(out / "result.jsonl", _header("result", chash, **meta) + result.to_jsonl())
    _write(out / "metrics.csv", _metrics_csv(Cell(policy, effective["scenario"], effective["seed"], report), chash))
    trace = "".join(json.dumps(s, separators=(",", ":")) + "\n" for s in result.bank_trace)
    _write(out / "bank_trace.jsonl", _header("bank_trace", chash, **meta) + trace)
    print(
        f"{policy.value} on {effective['scenario']} seed {effective['seed']}: "
        f"challenge_iou={report.challenge_iou:.4f} iou={report.iou:.4f} mciou={report.mciou:.4f}"
    )
    return EXIT_OK


# ------------------------------------------------------------------ ablate


def _list(data: Mapping, key: str, default: Sequence) -> list:
    value = data.get(key, list(default))
    if not isinstance(value, list) or not value:
        raise ConfigError(f"ablate config: {key!r} must be a nonempty list")
    return value


def ablate_effective(data: Mapping, args: argparse.Namespace):
    _check_keys(data, ABLATE_KEYS, "ablate config")
    scenarios: dict[str, ScenarioScript] = {}
    for ref in _list(data, "scenarios", BUILTIN_NAMES):
        name, script = resolve_scenario(ref)
        if name in scenarios:
            raise ConfigError(f"ablate config: scenario {name!r} listed twice")
        scenarios[name] = script
    if args.policy is not None:
        policies = [parse_policy(args.policy)]
    else:
        policies = [parse_policy(p) for p in _list(data, "policies", [p.value for p in POLICY_ORDER])]
    policies = [p for p in POLICY_ORDER if p in set(policies)]
    if args.seed is not None:
        seeds = [parse_seed(args.seed)]
    else:
        seeds = sorted({parse_seed(s) for s in _list(data, "seeds", DEFAULT_SEEDS)})
    cfg = bank_from_overrides(data.get("bank"))
    params = proposer_from_overrides(data.get("proposer"))
    effective = {
        "command": "ablate",
        "scenarios": {n: script_to_dict(s) for n, s in sorted(scenarios.items())},
        "policies": [p.value for p in policies],
        "seeds": seeds,
        "bank": asdict(cfg),
        "proposer": asdict(params),
    }
    return effective, scenarios, policies, seeds, cfg, params


def cmd_ablate(args: argparse.Namespace) -> int:
    data = read_config(args.config)
    effective, scenarios, policies, seeds, cfg, params = ablate_effective(data, args)
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    chash = config_hash(effective)
    out = out_dir(args, data)
    table = run_ablation(scenarios, seeds, cfg, params, policies, jobs=args.jobs, strict=False)

    comment = f"config_hash={chash}" + (f" partial=true failed_cells={len(table.failures)}" if table.partial else "")
    _write(out / "cells.csv", table.to_csv(header_comment=comment))
    header = {"config_hash": chash, "partial": table.partial, "failed_cells": [list(f) for f in table.failures]}
    _write(out / "aggregate.json", table.to_json(header=header) + "\n")

    lines = [f"# {comment}", table.format_table().rstrip("\n")]
    for label, ok in ordering_checks(table):
        lines.append(f"{'PASS' if ok else 'FAIL'} {label}")
    for p, s, seed, msg in table.failures:
        lines.append(f"CELL FAILED policy={p} scenario={s} seed={seed}: {msg}")
    text = "\n".join(lines) + "\n"
    _write(out / "table.txt", text)
    sys.stdout.write(text)
    if table.partial:
        log.error("%d of %d cells failed; results are partial", len(table.failures), len(table.failures) + len(table.cells))
        return EXIT_INVARIANT
    return EXIT_OK


# -------------------------------------------------------------------- eval


def read_mask_jsonl(path: str, what: str) -> tuple[dict, list[dict[str, BinaryMask]]]:
    """Parse a result or ground-truth dump -> (header, per-frame class masks)."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read {what} file {path}: {exc.strerror}") from exc
    header: dict = {}
    frames: list[dict[str, BinaryMask]] = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{lineno}:{exc.colno}: {exc.msg}") from exc
        if not isinstance(obj, dict):
            raise ConfigError(f"{path}:{lineno}: expected a JSON object")
        if "config_hash" in obj:
            header = obj
            continue
        if obj.get("frame") != len(frames) or not isinstance(obj.get("masks"), dict):
            raise ConfigError(f"{path}:{lineno}: expected frame {len(frames)} with a 'masks' object")
        try:
            frames.append({c: mask_from_text(t) for c, t in obj["masks"].items()})
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad mask: {exc}") from exc
    if not frames:
        raise ConfigError(f"{path}: no frame records")
    return header, frames


def cmd_eval(args: argparse.Namespace) -> int:
    rhead, result = read_mask_jsonl(args.result, "result")
    _, gt = read_mask_jsonl(args.gt, "ground-truth")
    if len(result) != len(gt):
        raise ConfigError(f"result has {len(result)} frames, ground truth {len(gt)}")
    try:
        report = evaluate(result, gt)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    digest = hashlib.sha256()
    for p in (args.result, args.gt):
        digest.update(Path(p).read_bytes())
    chash = digest.hexdigest()[:16]
    # label the row from the result header when one is present
    policy = parse_policy(rhead.get("policy", PolicyKind.MA_SAM2.value))
    seed = parse_seed(rhead.get("seed", 0))
    cell = Cell(policy, str(rhead.get("scenario", "-")), seed, report)
    text = _metrics_csv(cell, chash)
    if args.out:
        _write(Path(args.out) / "metrics.csv", text)
    sys.stdout.write(text)
    return EXIT_OK


# -------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="memtrack", description="Memory-bank policy tracking simulator.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="dump ground truth for a scenario")
    p.add_argument("script", help="builtin scenario name or path to a scenario JSON file")
    p.add_argument("--out", help="output directory (default: current directory)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("run", help="track one scenario with one policy")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--policy", help="override the config policy (fifo|cam|orm|ma)")
    p.add_argument("--out", help="override the config out_dir")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="four-policy sweep over scenarios and seeds")
    p.add_argument("--config", help="ablate config JSON (default: builtins x seeds 0..9 x all policies)")
    p.add_argument("--seed", type=int, help="run a single seed instead of the config list")
    p.add_argument("--policy", help="run a single policy instead of the config list")
    p.add_argument("--out", help="override the config out_dir")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("eval", help="recompute metrics from result and ground-truth dumps")
    p.add_argument("result", help="result.jsonl from 'run'")
    p.add_argument("gt", help="gt.jsonl from 'render'")
    p.add_argument("--out", help="also write metrics.csv here")
    p.set_defaults(func=cmd_eval)
    return ap


def _setup_logging() -> None:
    name = os.environ.get("MEMTRACK_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    logging.basicConfig(
        level=level if isinstance(level, int) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors already; keep --help at 0
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"memtrack: error: {exc}", file=sys.stderr)
        return EXIT_USER
    except InvariantViolation as exc:
        print(f"memtrack: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
