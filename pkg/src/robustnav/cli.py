"""Operator surface: suite generation, benchmark runs, reports, replay
verification, and preview commands.

    robustnav suite-gen --config cfg.json --out suite.txt
    robustnav run --config cfg.json --suite suite.txt --out out/run1
    robustnav report --traces out/run1/traces.jsonl --format markdown
    robustnav replay --run out/run1
    robustnav preview-corruption --kind speckle_noise --severity 5 \
        --seed 7 --in frame.ppm --out corrupted.ppm
    robustnav preview-scene --seed 11 --out scene.ppm
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cf
from . import metrics as mt
from . import render as rndr
from . import replay as rp
from . import runner as rn
from . import task as tk
from . import viscorrupt as vc
from . import world as wd


def _add_config_args(p):
    p.add_argument("--config", help="JSON run config (defaults apply without it)")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY.PATH=VALUE", help="override a config key")


def cmd_suite_gen(args):
    cfg = cf.load_config(args.config, args.overrides)
    if args.episodes is not None:
        cfg["suite"]["n"] = args.episodes
    grids = cf.build_scenes(cfg)
    specs = tk.generate_suite(grids, cfg["task"], cfg["suite"]["n"],
                              cfg["suite"]["seed"])
    data = tk.save_suite(specs)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_bytes(data)
    counts = {}
    for s in specs:
        counts[s.difficulty] = counts.get(s.difficulty, 0) + 1
    for name in ("easy", "medium", "hard"):
        print(f"{name}: {counts.get(name, 0)}")
    print(f"wrote {len(specs)} episodes to {args.out}")
    return 0


def cmd_run(args):
    cfg = cf.load_config(args.config, args.overrides)
    if args.agent:
        cfg["agent"] = args.agent
    if args.workers:
        cfg["workers"] = args.workers
    if args.calibration_budget is not None:
        cfg["calibration_budget"] = args.calibration_budget
    try:
        cf.check_benchmark_rule(cfg)
    except cf.ConfigError as e:
        print(f"refusing to run: {e}", file=sys.stderr)
        return 2

    grids = cf.build_scenes(cfg)
    if args.suite:
        specs = tk.load_suite(Path(args.suite).read_bytes())
    else:
        specs = tk.generate_suite(grids, cfg["task"], cfg["suite"]["n"],
                                  cfg["suite"]["seed"])
    records, n_aborted = rn.run_suite(cfg, grids, specs)

    out = Path(args.out or cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "traces.jsonl").write_bytes(mt.records_to_jsonl(records))
    groups = mt.aggregate(records)
    (out / "report.csv").write_bytes(mt.emit_report(groups, "csv"))
    (out / "report.md").write_bytes(mt.emit_report(groups, "markdown"))
    label, visual, dynamics = cf.run_labels(cfg)
    meta = {
        "agent": cfg["agent"],
        "privileged": cfg["agent"] == "oracle",
        "corruption": label,
        "visual": visual,
        "dynamics": dynamics,
        "sensor": cfg["sensor"],
        "task": cfg["task"],
        "episodes": len(records),
        "aborted": n_aborted,
        "config": cfg,
    }
    (out / "run_meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    sr = sum(r.success for r in records) / max(len(records), 1)
    print(f"{len(records)} episodes, SR {100 * sr:.2f}%, "
          f"{n_aborted} aborted -> {out}")
    return 0 if n_aborted == 0 else 3


def cmd_report(args):
    records = mt.records_from_jsonl(Path(args.traces).read_bytes())
    data = mt.emit_report(mt.aggregate(records), args.format)
    if args.out:
        Path(args.out).write_bytes(data)
    else:
        sys.stdout.write(data.decode("ascii"))
    return 0


def cmd_replay(args):
    run_dir = Path(args.run)
    traces = (run_dir / "traces.jsonl")
    report = (run_dir / "report.csv")
    traces_text = traces.read_text(encoding="ascii") if traces.exists() else ""
    report_bytes = report.read_bytes() if report.exists() else rp.render_csv({})
    ok, problems = rp.replay_run(traces_text, report_bytes)
    if ok:
        print("replay OK: recomputed aggregates match the stored report")
        return 0
    for p in problems:
        print(f"mismatch: {p}", file=sys.stderr)
    return 1


def cmd_preview_corruption(args):
    rgb = rndr.read_ppm(Path(args.infile).read_bytes())
    op = vc.VisCorruption(args.kind, args.severity, args.seed or 0)
    stack = vc.CorruptionStack((op,))
    bound = vc.bind_episode(stack, args.seed or 0, rgb.shape[0], rgb.shape[1])
    out = bound.apply(rgb)
    Path(args.out).write_bytes(rndr.write_ppm(out))
    print(f"wrote {args.out}")
    return 0


def _topdown_ppm(grid):
    img = np.zeros((grid.height, grid.width, 3), dtype=np.uint8)
    img[~grid.occupancy] = (235, 235, 230)
    img[grid.occupancy] = (40, 40, 45)
    for obj in grid.objects:
        color = rndr.CATEGORY_COLORS[obj.category]
        for r, c in obj.footprint:
            img[r, c] = color
    return rndr.write_ppm(img)


def cmd_preview_scene(args):
    cfg = cf.load_config(args.config, args.overrides)
    if args.scene:
        grid = wd.load_scene(Path(args.scene).read_bytes())
    else:
        grid = wd.generate_scene(args.seed, cf.scene_params(cfg))
    Path(args.out).write_bytes(_topdown_ppm(grid))
    print(f"wrote {args.out} ({grid.width}x{grid.height} cells)")
    if args.pose:
        x, y, heading = (float(v) for v in args.pose.split(","))
        r = cfg["render"]
        intr = rndr.CameraIntrinsics(h_fov=r["h_fov"], width=r["width"],
                                     height=r["height"], max_depth=r["max_depth"])
        frame = rndr.render(grid, wd.Pose(x, y, heading), intr)
        if args.frame_out:
            Path(args.frame_out).write_bytes(rndr.write_ppm(frame.rgb))
            print(f"wrote {args.frame_out}")
        if args.depth_out:
            Path(args.depth_out).write_bytes(rndr.write_depth_raw(frame.depth))
            print(f"wrote {args.depth_out}")
    return 0


def cmd_save_scene(args):
    cfg = cf.load_config(args.config, args.overrides)
    grid = wd.generate_scene(args.seed, cf.scene_params(cfg))
    Path(args.out).write_bytes(wd.save_scene(grid))
    print(f"wrote {args.out}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="robustnav",
                                 description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("suite-gen", help="generate an episode suite file")
    _add_config_args(p)
    p.add_argument("--episodes", "-n", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_suite_gen)

    p = sub.add_parser("run", help="run a benchmark suite")
    _add_config_args(p)
    p.add_argument("--suite", help="suite file (generated per config if omitted)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--agent", help="oracle|depth_planner|rgb_planner|random|external:<endpoint>")
    p.add_argument("--workers", type=int)
    p.add_argument("--calibration-budget", type=int, dest="calibration_budget")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("report", help="re-emit a report from traces")
    p.add_argument("--traces", required=True)
    p.add_argument("--format", choices=["csv", "markdown"], default="csv")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("replay", help="recompute metrics from raw traces and "
                                      "verify them against the stored report")
    p.add_argument("--run", required=True)
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("preview-corruption", help="apply a corruption to a PPM image")
    p.add_argument("--kind", required=True)
    p.add_argument("--severity", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_preview_corruption)

    p = sub.add_parser("preview-scene", help="render a top-down scene view "
                                             "and optional egocentric frame")
    _add_config_args(p)
    p.add_argument("--seed", type=int, default=11)
    p.add_argument("--scene", help="scene file instead of a generator seed")
    p.add_argument("--out", required=True)
    p.add_argument("--pose", help="x,y,heading for the egocentric frame")
    p.add_argument("--frame-out")
    p.add_argument("--depth-out")
    p.set_defaults(fn=cmd_preview_scene)

    p = sub.add_parser("save-scene", help="generate and save a scene file")
    _add_config_args(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_save_scene)

    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
