"""Suite execution: in-process and external agents, episode-level worker
pools, and trace/record assembly.  Results are worker-count independent by
construction (per-episode seeds, post-hoc sort by episode id)."""

from __future__ import annotations

import json
import multiprocessing as mp

from . import agents as ag
from . import config as cf
from . import metrics as mt
from . import protocol as proto
from . import task as tk
from . import world as wd


class RunnerError(Exception):
    pass


def run_episode(env, agent, spec):
    """One in-process episode; returns the env trace dict."""
    obs = env.reset(spec)
    agent.reset(spec, obs, env=env)
    while True:
        action = agent.act(obs)
        res = env.step(action)
        obs = res.obs
        if res.done:
            break
    return env.trace_data()


class EnvPool:
    """Lazy per-scene environments over one shared EnvConfig."""

    def __init__(self, grids, env_config):
        self._grids = {g.scene_id: g for g in grids}
        self._cfg = env_config
        self._envs = {}

    def __call__(self, spec):
        env = self._envs.get(spec.scene_id)
        if env is None:
            if spec.scene_id not in self._grids:
                raise RunnerError(f"suite references unknown scene {spec.scene_id!r}")
            env = tk.NavEnv(self._grids[spec.scene_id], self._cfg)
            self._envs[spec.scene_id] = env
        return env

    def grid(self, scene_id):
        return self._grids[scene_id]


def _trace_to_record(trace, cfg, aborted=False):
    label, visual, dynamics = cf.run_labels(cfg)
    return mt.record_from_trace(trace, corruption=label, visual=visual,
                                dynamics=dynamics, sensor=cfg["sensor"],
                                aborted=aborted)


# -- worker-pool plumbing ------------------------------------------------------

_W = {}


def _init_worker(cfg_json, scene_blobs):
    cfg = json.loads(cfg_json)
    _W["cfg"] = cfg
    _W["grids"] = {sid: wd.load_scene(blob) for sid, blob in scene_blobs.items()}
    _W["pool"] = EnvPool(_W["grids"].values(), cf.build_env_config(cfg))
    name = cfg["agent"]
    if name.startswith("external:"):
        endpoint = name[len("external:"):]
        transport = proto.open_transport(endpoint)
        proto.handshake(transport, cfg["sensor"], cfg["task"],
                        cfg["external_deadline_s"])
        _W["transport"] = transport
        _W["agent"] = None
    else:
        _W["agent"] = ag.make_agent(name, cfg.get("agent_seed", 0))
        _W["transport"] = None


def _run_one(spec_line):
    spec = tk.load_suite(spec_line)[0]
    env = _W["pool"](spec)
    if _W["transport"] is not None:
        trace, aborted = proto.serve_episode(
            env, spec, _W["transport"], _W["cfg"]["external_deadline_s"])
    else:
        trace = run_episode(env, _W["agent"], spec)
        aborted = False
    rec = _trace_to_record(trace, _W["cfg"], aborted)
    return mt.record_to_json(rec)


def run_suite(cfg, grids, specs):
    """Execute a suite per the run config.  Returns (records, n_aborted);
    records come back sorted by episode id regardless of worker count."""
    workers = int(cfg.get("workers", 1))
    name = cfg["agent"]
    external = name.startswith("external:")
    budget = int(cfg.get("calibration_budget", 0))

    if external and workers > 1 and budget > 0:
        raise RunnerError("calibration with an external agent needs workers=1 "
                          "(one logical agent, one connection)")

    records = []
    n_aborted = 0
    if workers == 1:
        pool = EnvPool(grids, cf.build_env_config(cfg))
        if external:
            endpoint = name[len("external:"):]
            transport = proto.open_transport(endpoint)
            try:
                traces, aborted_flags = proto.serve(
                    pool, specs, transport,
                    deadline=cfg["external_deadline_s"],
                    calibration_budget=budget, calibration_specs=specs)
            finally:
                transport.close()
            for trace, aborted in zip(traces, aborted_flags):
                records.append(_trace_to_record(trace, cfg, aborted))
                n_aborted += int(aborted)
        else:
            agent = ag.make_agent(name, cfg.get("agent_seed", 0))
            if budget > 0:
                tk.calibration_phase(pool, agent, specs, budget)
            for spec in specs:
                trace = run_episode(pool(spec), agent, spec)
                records.append(_trace_to_record(trace, cfg))
    else:
        if budget > 0 and not external:
            # calibration happens once, on a single sequential connection
            pool = EnvPool(grids, cf.build_env_config(cfg))
            agent = ag.make_agent(name, cfg.get("agent_seed", 0))
            tk.calibration_phase(pool, agent, specs, budget)
        scene_blobs = {g.scene_id: wd.save_scene(g) for g in grids}
        cfg_json = json.dumps(cfg, sort_keys=True)
        lines = [tk.save_suite([s]).decode("ascii") for s in specs]
        ctx = mp.get_context("fork")
        with ctx.Pool(workers, initializer=_init_worker,
                      initargs=(cfg_json, scene_blobs)) as p:
            out = p.map(_run_one, lines, chunksize=1)
        records = [mt.record_from_json(ln) for ln in out]
        n_aborted = sum(1 for r in records if r.aborted)
    records.sort(key=lambda r: r.episode_id)
    return records, n_aborted
