#!/usr/bin/env python3
"""Produce the wire-client golden fixtures: 20 server-emitted observation
lines plus checksums of their decoded payloads.

    python3 scripts/make_client_goldens.py client/tests/fixtures
"""

import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from robustnav import agents as ag
from robustnav import protocol as proto
from robustnav import render as R
from robustnav import task as tk
from robustnav import world as wd


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = wd.generate_scene(7)
    env = tk.NavEnv(grid, tk.EnvConfig(
        sensor="rgbd", intrinsics=R.CameraIntrinsics(width=64, height=64)))
    specs = tk.generate_suite([grid], tk.POINTNAV, 3, 2024)
    agent = ag.make_agent("depth_planner")

    lines = []
    meta = []
    for spec in specs:
        obs = env.reset(spec)
        agent.reset(spec, obs, env=env)
        reward, info = 0.0, {"failed_action": False, "in_range": False,
                             "geodesic_to_goal": env.geodesic_to_goal}
        while len(lines) < 20:
            line = proto.encode_observation(obs, reward, False, info)
            lines.append(line)
            meta.append({
                "step_index": obs.step_index,
                "rgb_sha256": hashlib.sha256(obs.rgb.tobytes()).hexdigest(),
                "depth_sha256": hashlib.sha256(
                    np.ascontiguousarray(obs.depth, dtype="<f4").tobytes()).hexdigest(),
                "width": int(obs.rgb.shape[1]),
                "height": int(obs.rgb.shape[0]),
                "gps_compass": [obs.gps_compass[0], obs.gps_compass[1]],
                "rgb_spot": [int(v) for v in obs.rgb[32, 32]],
                "depth_spot": float(obs.depth[0, 32]),
                "reward": reward,
            })
            res = env.step(agent.act(obs))
            obs, reward, info = res.obs, res.reward, res.info
            if res.done:
                break
        if len(lines) >= 20:
            break

    (out / "golden_observations.jsonl").write_text("\n".join(lines) + "\n")
    (out / "golden_meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"wrote {len(lines)} golden observation lines to {out}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "client/tests/fixtures")
