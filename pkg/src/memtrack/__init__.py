"""Memory-bank policies for one-prompt multi-target mask tracking.

The package pairs a tracker-agnostic memory policy (cumulative hypothesis
scoring plus an occlusion store) with a seeded synthetic world that stands in
for a neural segmenter, so policies can be compared end to end on a laptop.
"""

from __future__ import annotations

from .errors import ConfigError, InvariantViolation, ShapeMismatchError
from .masks import BinaryMask
from .memory import BankConfig, MemoryBank, MemoryEntry
from .metrics import MetricReport, evaluate, run_ablation
from .synth import ProposerParams, ScenarioScript, SyntheticProposer, builtin_scenarios, render_scenario
from .tracker import PolicyKind, Prompt, TrackResult, run_sequence

__all__ = [
    "BankConfig",
    "BinaryMask",
    "ConfigError",
    "InvariantViolation",
    "MemoryBank",
    "MemoryEntry",
    "MetricReport",
    "PolicyKind",
    "Prompt",
    "ProposerParams",
    "ScenarioScript",
    "ShapeMismatchError",
    "SyntheticProposer",
    "TrackResult",
    "builtin_scenarios",
    "evaluate",
    "render_scenario",
    "run_ablation",
    "run_sequence",
]

__version__ = "0.1.0"
