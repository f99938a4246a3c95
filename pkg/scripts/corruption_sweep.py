#!/usr/bin/env python3
"""Small corruption-trend experiment: run the RGB and depth planners over one
suite under a sweep of corruptions and print the aggregate table.

    python3 scripts/corruption_sweep.py --episodes 60 --out out/sweep
"""

import argparse
import json
from pathlib import Path

from robustnav import config as cf
from robustnav import metrics as mt
from robustnav import runner as rn
from robustnav import task as tk

SWEEP = [
    ("rgb_planner", [], "none"),
    ("rgb_planner", [{"kind": "speckle_noise", "severity": 3}], "none"),
    ("rgb_planner", [{"kind": "speckle_noise", "severity": 5}], "none"),
    ("rgb_planner", [{"kind": "spatter", "severity": 3}], "none"),
    ("rgb_planner", [{"kind": "spatter", "severity": 5}], "none"),
    ("depth_planner", [], "none"),
    ("depth_planner", [{"kind": "spatter", "severity": 5}], "none"),
    ("depth_planner", [], "motion_drift"),
    ("depth_planner", [], "motor_failure"),
]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--episodes", type=int, default=60)
    ap.add_argument("--seed", type=int, default=5150)
    ap.add_argument("--workers", type=int, default=2)
    ap.add_argument("--out", default="out/sweep")
    args = ap.parse_args()

    cfg = json.loads(json.dumps(cf.DEFAULT_CONFIG))
    cfg["render"].update(width=64, height=64)
    cfg["scenes"]["seeds"] = [7, 11]
    cfg["scenes"]["params"].update(rooms=[5, 7], door_width_m=0.6)
    cfg["calibration_budget"] = 0
    cfg["workers"] = args.workers

    grids = cf.build_scenes(cfg)
    specs = tk.generate_suite(grids, cfg["task"], args.episodes, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    all_records = []
    print(f"{'agent':<14} {'corruption':<28} {'SR%':>6} {'SPL%':>6} "
          f"{'fails/ep':>9} {'steps':>6}")
    for agent, visual, dynk in SWEEP:
        run_cfg = json.loads(json.dumps(cfg))
        run_cfg["agent"] = agent
        run_cfg["visual"] = visual
        run_cfg["dynamics"] = {"kind": dynk}
        records, aborted = rn.run_suite(run_cfg, grids, specs)
        label, _, _ = cf.run_labels(run_cfg)
        n = len(records)
        sr = 100.0 * sum(r.success for r in records) / n
        spl = 100.0 * sum(mt.spl(r) for r in records) / n
        fails = sum(sum(r.failed) for r in records) / n
        steps = sum(r.steps for r in records) / n
        print(f"{agent:<14} {label:<28} {sr:>6.1f} {spl:>6.1f} "
              f"{fails:>9.2f} {steps:>6.1f}")
        all_records.extend(records)

    (out / "sweep_traces.jsonl").write_bytes(mt.records_to_jsonl(all_records))
    (out / "sweep_report.csv").write_bytes(
        mt.emit_report(mt.aggregate(all_records), "csv"))
    print(f"\nwrote {out}/sweep_traces.jsonl and {out}/sweep_report.csv")


if __name__ == "__main__":
    main()
