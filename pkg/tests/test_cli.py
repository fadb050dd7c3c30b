from __future__ import annotations

import json
import subprocess
import sys

import pytest

from memtrack import cli
from memtrack.errors import InvariantViolation
from test_metrics import TINY


def write(path, obj):
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(path)


@pytest.fixture
def tiny(tmp_path):
    return write(tmp_path / "tiny.json", TINY)


def body(path):
    """File lines after the header."""
    lines = path.read_text().splitlines()
    return lines[1:]


def test_render_builtin(tmp_path):
    assert cli.main(["render", "reappearance", "--out", str(tmp_path / "a")]) == 0
    gt = tmp_path / "a" / "gt.jsonl"
    lines = gt.read_text().splitlines()
    assert "config_hash" in json.loads(lines[0])
    assert len(lines) - 1 == 200
    rec = json.loads(lines[1])
    assert rec["frame"] == 0 and set(rec["masks"]) == {"A", "B"}
    assert cli.main(["render", "reappearance", "--out", str(tmp_path / "b")]) == 0
    assert gt.read_bytes() == (tmp_path / "b" / "gt.jsonl").read_bytes()


def test_render_errors(tmp_path, capsys):
    assert cli.main(["render", write(tmp_path / "bad.json", "{oops"), "--out", str(tmp_path)]) == 2
    broken = dict(TINY, targets=[dict(TINY["targets"][0], shape={"length": 3})])
    assert cli.main(["render", write(tmp_path / "s.json", broken), "--out", str(tmp_path)]) == 2
    assert "radius" in capsys.readouterr().err
    assert cli.main(["render", "no-such-scenario"]) == 2


def test_run_builtin_is_deterministic(tmp_path):
    cfg = write(tmp_path / "run.json", {"scenario": "overlap", "policy": "ma", "seed": 0})
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    for name in ("result.jsonl", "metrics.csv", "bank_trace.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    lines = (tmp_path / "a" / "metrics.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert lines[1] == "policy,scenario,seed,challenge_iou,iou,mciou"
    assert lines[2].startswith("ma,overlap,0,")
    trace = [json.loads(x) for x in body(tmp_path / "a" / "bank_trace.jsonl")]
    assert list(trace[0]) == ["frame", "prompt", "orm", "cam", "recent"]
    assert len(body(tmp_path / "a" / "result.jsonl")) == 360


def test_run_flags_override_and_change_hash(tmp_path, tiny):
    cfg = write(tmp_path / "run.json", {"scenario": tiny, "out_dir": str(tmp_path / "x")})
    assert cli.main(["run", "--config", cfg]) == 0
    h1 = (tmp_path / "x" / "metrics.csv").read_text().splitlines()[0]
    assert cli.main(["run", "--config", cfg, "--seed", "3", "--policy", "fifo"]) == 0
    lines = (tmp_path / "x" / "metrics.csv").read_text().splitlines()
    assert lines[0] != h1 and lines[2].startswith("fifo,tiny,3,")


@pytest.mark.parametrize(
    "cfg",
    [
        {"scenario": "overlap", "policy": "bogus"},
        {"policy": "ma"},
        {"scenario": "nowhere.json"},
        {"scenario": "overlap", "extra": 1},
        {"scenario": "overlap", "bank": {"orm_capacity": 50}},
        {"scenario": "overlap", "proposer": {"q_max": 2}},
        {"scenario": "overlap", "seed": -1},
        {"scenario": "overlap", "seed": "7"},
        ["not", "an", "object"],
    ],
)
def test_run_config_errors(tmp_path, cfg):
    assert cli.main(["run", "--config", write(tmp_path / "c.json", cfg), "--out", str(tmp_path)]) == 2


def test_run_invariant_violation_exit_code(tmp_path, tiny, monkeypatch):
    def boom(*a, **k):
        raise InvariantViolation("forced")

    monkeypatch.setattr(cli, "run_sequence", boom)
    assert cli.main(["run", "--config", write(tmp_path / "c.json", {"scenario": tiny}), "--out", str(tmp_path)]) == 3


def test_eval_matches_run(tmp_path, tiny):
    assert cli.main(["render", tiny, "--out", str(tmp_path)]) == 0
    cfg = write(tmp_path / "run.json", {"scenario": tiny, "policy": "cam", "seed": 2})
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path)]) == 0
    run_row = (tmp_path / "metrics.csv").read_text().splitlines()[2]
    assert cli.main(["eval", str(tmp_path / "result.jsonl"), str(tmp_path / "gt.jsonl"), "--out", str(tmp_path / "ev")]) == 0
    assert (tmp_path / "ev" / "metrics.csv").read_text().splitlines()[2] == run_row
    assert cli.main(["eval", str(tmp_path / "result.jsonl"), write(tmp_path / "junk.jsonl", "{}\n")]) == 2
    assert cli.main(["eval", str(tmp_path / "missing.jsonl"), str(tmp_path / "gt.jsonl")]) == 2


def test_ablate_outputs_and_jobs_invariance(tmp_path, tiny):
    cfg = write(tmp_path / "ab.json", {"scenarios": [tiny], "seeds": [0, 1]})
    assert cli.main(["ablate", "--config", cfg, "--out", str(tmp_path / "j1")]) == 0
    assert cli.main(["ablate", "--config", cfg, "--out", str(tmp_path / "j2"), "--jobs", "2"]) == 0
    for name in ("cells.csv", "aggregate.json", "table.txt"):
        assert (tmp_path / "j1" / name).read_bytes() == (tmp_path / "j2" / name).read_bytes()
    assert len((tmp_path / "j1" / "cells.csv").read_text().splitlines()) == 2 + 8
    table = (tmp_path / "j1" / "table.txt").read_text()
    assert sum(line.startswith(("PASS", "FAIL")) for line in table.splitlines()) == 4
    agg = json.loads((tmp_path / "j1" / "aggregate.json").read_text())
    assert agg["header"]["partial"] is False and list(agg["aggregate"]) == ["fifo", "cam", "orm", "ma"]


def test_ablate_single_cell_equals_run(tmp_path, tiny):
    cfg = write(tmp_path / "ab.json", {"scenarios": [tiny], "seeds": [5], "policies": ["ma"]})
    assert cli.main(["ablate", "--config", cfg, "--out", str(tmp_path / "ab")]) == 0
    run = write(tmp_path / "run.json", {"scenario": tiny, "policy": "ma", "seed": 5})
    assert cli.main(["run", "--config", run, "--out", str(tmp_path / "run")]) == 0
    assert body(tmp_path / "ab" / "cells.csv") == body(tmp_path / "run" / "metrics.csv")


def test_ablate_partial_results(tmp_path, tiny):
    empty = write(tmp_path / "empty.json", dict(TINY, targets=[dict(TINY["targets"][0], visible=[])]))
    cfg = write(tmp_path / "ab.json", {"scenarios": [tiny, empty], "seeds": [0], "policies": ["fifo"]})
    assert cli.main(["ablate", "--config", cfg, "--out", str(tmp_path)]) == 3
    assert "partial=true" in (tmp_path / "cells.csv").read_text().splitlines()[0]
    agg = json.loads((tmp_path / "aggregate.json").read_text())
    assert agg["header"]["partial"] is True and agg["header"]["failed_cells"][0][:3] == ["fifo", "empty", 0]
    assert "CELL FAILED" in (tmp_path / "table.txt").read_text()


def test_ablate_config_errors(tmp_path, tiny):
    for cfg in ({"scenarios": []}, {"seeds": []}, {"scenarios": [tiny, tiny]}, {"policy": ["ma"]}):
        assert cli.main(["ablate", "--config", write(tmp_path / "c.json", cfg), "--out", str(tmp_path)]) == 2
    assert cli.main(["ablate", "--jobs", "0", "--out", str(tmp_path)]) == 2


def test_usage_errors_and_module_entry(monkeypatch, tmp_path, tiny):
    assert cli.main([]) == 2
    assert cli.main(["run"]) == 2
    monkeypatch.setenv("MEMTRACK_LOG", "debug")
    assert cli.main(["render", tiny, "--out", str(tmp_path)]) == 0
    proc = subprocess.run([sys.executable, "-m", "memtrack", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "ablate" in proc.stdout
