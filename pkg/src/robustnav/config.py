"""Run configuration: one structured JSON file plus dotted-key overrides.
Every benchmark parameter surfaces here with its standard value as default."""

from __future__ import annotations

import copy
import json
import os

from . import dynamics as dyn
from . import render as rndr
from . import task as tk
from . import viscorrupt as vc
from . import world as wd

SEED_ENV_VAR = "ROBUSTNAV_SEED"


class ConfigError(Exception):
    pass


DEFAULT_CONFIG = {
    "task": "pointnav",
    "sensor": "rgbd",
    "scenes": {
        "seeds": [11, 12, 13],
        "paths": [],
        "params": {
            "width_m": 8.0,
            "height_m": 8.0,
            "cell_size": wd.CELL_SIZE,
            "rooms": [2, 4],
            "door_width_m": 0.8,
            "min_room_m": 2.0,
            "objects_per_category": 1,
        },
    },
    "suite": {"n": 1100, "seed": 7, "path": None},
    "render": {"width": 224, "height": 224, "h_fov": 79.0, "max_depth": 10.0},
    "visual": [],  # e.g. [{"kind": "speckle_noise", "severity": 5}]
    "dynamics": {"kind": "none"},
    "actuation": {
        "enabled": True,
        "trans_mean": 0.25,
        "trans_std": 0.005,
        "rot_mean": 30.0,
        "rot_std": 0.5,
    },
    "agent": "depth_planner",
    "agent_seed": 0,
    "calibration_budget": tk.DEFAULT_CALIBRATION_BUDGET,
    "external_deadline_s": 30.0,
    "workers": 1,
    "out_dir": "out/run",
    "max_steps": tk.MAX_STEPS,
    "reward": {"terminal": tk.TERMINAL_REWARD, "slack": tk.SLACK_PENALTY},
    "benchmark_mode": False,
    "train_reserved": [],
}


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path=None, overrides=()):
    """Defaults <- config file <- --set overrides <- ROBUSTNAV_SEED env var."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        with open(path, "r", encoding="utf-8") as f:
            try:
                user = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}: invalid JSON ({e})") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        cfg = _merge(cfg, user)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key.path=value")
        key, _, raw = item.partition("=")
        _apply_override(cfg, key.strip(), raw.strip())
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        cfg["suite"]["seed"] = int(env_seed)
    validate_config(cfg)
    return cfg


def _apply_override(cfg, dotted, raw):
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings allowed
    node = cfg
    parts = dotted.split(".")
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = value


def validate_config(cfg):
    if cfg["task"] not in (tk.POINTNAV, tk.OBJECTNAV):
        raise ConfigError(f"unknown task {cfg['task']!r}")
    if cfg["sensor"] not in ("rgb", "rgbd"):
        raise ConfigError(f"unknown sensor {cfg['sensor']!r}")
    for spec in cfg["visual"]:
        vc.VisCorruption(spec["kind"], spec.get("severity"), spec.get("seed", 0))
    build_dyn_corruption(cfg)
    if cfg["agent"] == "depth_planner" and cfg["sensor"] != "rgbd":
        raise ConfigError("depth_planner requires the rgbd sensor")
    if cfg["workers"] < 1:
        raise ConfigError("workers must be >= 1")


def check_benchmark_rule(cfg):
    """Benchmark-mode runs refuse evaluation targets whose corruption kinds
    were marked train-reserved (seen during training), keeping target
    corruptions genuinely unseen."""
    if not cfg.get("benchmark_mode"):
        return
    reserved = set(cfg.get("train_reserved", []))
    requested = {v["kind"] for v in cfg["visual"]}
    if cfg["dynamics"].get("kind", "none") != "none":
        requested.add(cfg["dynamics"]["kind"])
    clash = sorted(requested & reserved)
    if clash:
        raise ConfigError(
            f"benchmark mode refuses train-reserved corruption(s) {clash}: "
            f"target corruptions must be unseen during training")


# -- constructors -------------------------------------------------------------------


def scene_params(cfg):
    p = cfg["scenes"]["params"]
    return wd.SceneParams(
        width_m=p["width_m"], height_m=p["height_m"], cell_size=p["cell_size"],
        rooms=tuple(p["rooms"]), door_width_m=p["door_width_m"],
        min_room_m=p["min_room_m"],
        objects_per_category=p["objects_per_category"])


def build_scenes(cfg):
    grids = []
    params = scene_params(cfg)
    for seed in cfg["scenes"]["seeds"]:
        grids.append(wd.generate_scene(seed, copy.deepcopy(params)))
    for path in cfg["scenes"]["paths"]:
        with open(path, "rb") as f:
            grids.append(wd.load_scene(f.read()))
    if not grids:
        raise ConfigError("config names no scenes")
    return grids


def build_stack(cfg):
    return vc.CorruptionStack(tuple(
        vc.VisCorruption(v["kind"], v.get("severity"), v.get("seed", 0))
        for v in cfg["visual"]))


def build_dyn_corruption(cfg):
    d = cfg["dynamics"]
    kind = d.get("kind", "none")
    kwargs = {k: v for k, v in d.items() if k != "kind"}
    return dyn.DynCorruption(kind=kind, **kwargs)


def build_env_config(cfg):
    r = cfg["render"]
    return tk.EnvConfig(
        sensor=cfg["sensor"],
        intrinsics=rndr.CameraIntrinsics(
            h_fov=r["h_fov"], width=r["width"], height=r["height"],
            max_depth=r["max_depth"]),
        stack=build_stack(cfg),
        dyn_corruption=build_dyn_corruption(cfg),
        actuation=dyn.ActuationModel(**cfg["actuation"]),
        terminal_reward=cfg["reward"]["terminal"],
        slack=cfg["reward"]["slack"],
    )


def run_labels(cfg):
    """(corruption label, visual flag, dynamics flag) for report grouping."""
    stack = build_stack(cfg)
    dyn_c = build_dyn_corruption(cfg)
    parts = []
    if stack.ops:
        parts.append(stack.label())
    if dyn_c.kind != "none":
        parts.append(dyn_c.label())
    label = " + ".join(parts) if parts else "Clean"
    return label, bool(stack.ops), dyn_c.kind != "none"
