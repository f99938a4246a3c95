"""Criterion: the example greedy agent run through this client over the wire
reproduces the harness's in-process depth planner byte for byte.  The harness
is consumed strictly through its CLI and wire protocol."""

import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

pytestmark = pytest.mark.skipif(shutil.which("robustnav") is None,
                                reason="robustnav harness CLI not installed")


def run_cli(args, cwd):
    proc = subprocess.run(["robustnav", *args], cwd=cwd,
                          capture_output=True, text=True, timeout=600)
    assert proc.returncode == 0, proc.stderr
    return proc


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("parity")
    cfg = {
        "scenes": {"seeds": [7], "params": {"width_m": 6.0, "height_m": 6.0}},
        "suite": {"n": 10, "seed": 21},
        "render": {"width": 64, "height": 64, "h_fov": 79.0, "max_depth": 10.0},
        "calibration_budget": 0,
        "workers": 1,
    }
    (tmp / "cfg.json").write_text(json.dumps(cfg))
    run_cli(["suite-gen", "--config", "cfg.json", "--out", "suite.txt"], tmp)
    return tmp


def test_wire_parity_over_10_episodes(workdir):
    run_cli(["run", "--config", "cfg.json", "--suite", "suite.txt",
             "--agent", "depth_planner", "--out", "in_proc"], workdir)
    endpoint = f"external:{sys.executable} -m robustnav_client.example_agent"
    run_cli(["run", "--config", "cfg.json", "--suite", "suite.txt",
             "--agent", endpoint, "--out", "wired"], workdir)
    in_proc = (workdir / "in_proc" / "traces.jsonl").read_bytes()
    wired = (workdir / "wired" / "traces.jsonl").read_bytes()
    assert in_proc == wired
    assert ((workdir / "in_proc" / "report.csv").read_bytes()
            == (workdir / "wired" / "report.csv").read_bytes())
