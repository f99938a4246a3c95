"""Navigation metrics (SR, SPL) and behavior analytics computed from full
per-episode traces, plus the deterministic CSV/markdown report emitter.

Definitions used throughout (mirrored by the independent replay scanner):
  * stop_fail_pos: over episodes that invoked `end`, the fraction whose goal
    was not in range at that moment.
  * stop_fail_neg: per episode, among non-end steps whose post-state is in
    range, the fraction not followed immediately by `end`; averaged over
    episodes with at least one such step.
  * oracle_sr: fraction of episodes with any in-range step (forced stopping).
  * min_dist includes the start state; term_dist is the final state distance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

END_ACTION = "end"

CSV_HEADER = ("corruption,visual,dynamics,sensor,difficulty,n,sr,spl,"
              "failed_actions,term_dist,min_dist,stop_fail_pos,stop_fail_neg,"
              "oracle_sr,mean_steps")

GROUP_KEYS = ("corruption", "visual", "dynamics", "sensor", "difficulty")


class MetricsError(Exception):
    pass


@dataclass
class EpisodeRecord:
    episode_id: str
    scene_id: str
    task: str
    corruption: str
    visual: bool
    dynamics: bool
    sensor: str
    difficulty: str
    success: bool
    end_invoked: bool
    end_in_range: bool
    length: float  # shortest path length l
    p: float  # agent path length
    steps: int
    start_euclid: float
    poses: list  # (x, y, heading, pitch) per state, len == steps + 1
    actions: list
    failed: list
    in_range: list
    geo: list
    euclid: list
    aborted: bool = False

    def validate(self):
        if self.p < 0:
            raise MetricsError(f"{self.episode_id}: negative path length")
        if self.success and not self.end_invoked:
            raise MetricsError(f"{self.episode_id}: success without end")
        n = self.steps
        for name in ("actions", "failed", "in_range", "geo", "euclid"):
            if len(getattr(self, name)) != n:
                raise MetricsError(f"{self.episode_id}: {name} length != steps")
        if len(self.poses) != n + 1:
            raise MetricsError(f"{self.episode_id}: poses length != steps + 1")

    def recompute_p(self):
        return path_length_of(self.poses)


def path_length_of(poses):
    return float(sum(math.hypot(b[0] - a[0], b[1] - a[1])
                     for a, b in zip(poses, poses[1:])))


def record_from_trace(trace, *, corruption, visual, dynamics, sensor,
                      difficulty=None, aborted=False):
    """Build an EpisodeRecord from NavEnv trace data plus run labels."""
    spec = trace["spec"]
    rec = EpisodeRecord(
        episode_id=spec.episode_id,
        scene_id=spec.scene_id,
        task=spec.task,
        corruption=corruption,
        visual=visual,
        dynamics=dynamics,
        sensor=sensor,
        difficulty=difficulty if difficulty is not None else spec.difficulty,
        success=bool(trace["success"]) and not aborted,
        end_invoked=bool(trace["end_invoked"]),
        end_in_range=bool(trace["end_in_range"]),
        length=float(spec.length),
        p=path_length_of(trace["poses"]),
        steps=int(trace["steps"]),
        start_euclid=float(trace["start_euclid"]),
        poses=[list(p) for p in trace["poses"]],
        actions=list(trace["actions"]),
        failed=list(trace["failed"]),
        in_range=list(trace["in_range"]),
        geo=list(trace["geo"]),
        euclid=list(trace["euclid"]),
        aborted=aborted,
    )
    rec.validate()
    return rec


def spl(record):
    """Success weighted by path length: I * l / max(l, p)."""
    if record.length <= 0:
        raise MetricsError(f"{record.episode_id}: spl undefined for l <= 0")
    if not record.success:
        return 0.0
    return record.length / max(record.length, record.p)


def _stop_fail_neg(record):
    """Per-episode miss rate of the stopping rule; None when the goal is never
    in range at a non-end step."""
    denom = 0
    missed = 0
    for i in range(record.steps):
        if record.actions[i] == END_ACTION or not record.in_range[i]:
            continue
        denom += 1
        nxt = record.actions[i + 1] if i + 1 < record.steps else None
        if nxt != END_ACTION:
            missed += 1
    if denom == 0:
        return None
    return missed / denom


@dataclass(frozen=True)
class GroupStats:
    corruption: str
    visual: bool
    dynamics: bool
    sensor: str
    difficulty: str
    n: int
    sr: float
    spl: float
    failed_actions: float
    term_dist: float
    min_dist: float
    stop_fail_pos: float | None
    stop_fail_neg: float | None
    oracle_sr: float
    mean_steps: float


def aggregate(records, group_keys=GROUP_KEYS):
    """Fold records into per-group aggregates.  Empty groups never appear by
    construction; returns groups sorted by their key tuples."""
    if not records:
        return []
    groups = {}
    for r in records:
        key = tuple(getattr(r, k) for k in group_keys)
        groups.setdefault(key, []).append(r)
    out = []
    for key in sorted(groups, key=lambda k: tuple(str(x) for x in k)):
        rs = groups[key]
        n = len(rs)
        ends = [r for r in rs if r.end_invoked]
        sfp = (sum(1 for r in ends if not r.end_in_range) / len(ends)
               if ends else None)
        sfn_vals = [v for v in (_stop_fail_neg(r) for r in rs) if v is not None]
        sfn = sum(sfn_vals) / len(sfn_vals) if sfn_vals else None
        labels = dict(zip(GROUP_KEYS, (rs[0].corruption, rs[0].visual,
                                       rs[0].dynamics, rs[0].sensor,
                                       rs[0].difficulty)))
        if group_keys != GROUP_KEYS:
            # grouped coarser than the full key set: take labels from the key
            for k, v in zip(group_keys, key):
                labels[k] = v
            for k in GROUP_KEYS:
                if k not in group_keys:
                    labels[k] = "*" if k not in ("visual", "dynamics") else False
        out.append(GroupStats(
            corruption=labels["corruption"], visual=labels["visual"],
            dynamics=labels["dynamics"], sensor=labels["sensor"],
            difficulty=labels["difficulty"],
            n=n,
            sr=sum(1 for r in rs if r.success) / n,
            spl=sum(spl(r) for r in rs) / n,
            failed_actions=sum(sum(r.failed) for r in rs) / n,
            term_dist=sum((r.euclid[-1] if r.euclid else r.start_euclid)
                          for r in rs) / n,
            min_dist=sum(min([r.start_euclid] + r.euclid) for r in rs) / n,
            stop_fail_pos=sfp,
            stop_fail_neg=sfn,
            oracle_sr=sum(1 for r in rs if any(r.in_range)) / n,
            mean_steps=sum(r.steps for r in rs) / n,
        ))
    return out


def _fmt_rate(v):
    return "" if v is None else f"{100.0 * v:.2f}"


def _row_fields(g):
    return [
        g.corruption,
        "1" if g.visual else "0",
        "1" if g.dynamics else "0",
        g.sensor,
        g.difficulty,
        str(g.n),
        _fmt_rate(g.sr),
        _fmt_rate(g.spl),
        f"{g.failed_actions:.4f}",
        f"{g.term_dist:.4f}",
        f"{g.min_dist:.4f}",
        _fmt_rate(g.stop_fail_pos),
        _fmt_rate(g.stop_fail_neg),
        _fmt_rate(g.oracle_sr),
        f"{g.mean_steps:.2f}",
    ]


def emit_report(groups, fmt="csv"):
    """Byte-deterministic report.  Rows are sorted by SPL descending, then by
    the group key tuple."""
    rows = sorted(groups, key=lambda g: (-g.spl, g.corruption, g.visual,
                                         g.dynamics, g.sensor, g.difficulty))
    if fmt == "csv":
        lines = [CSV_HEADER]
        lines += [",".join(_row_fields(g)) for g in rows]
        return ("\n".join(lines) + "\n").encode("ascii")
    if fmt == "markdown":
        header = CSV_HEADER.split(",")
        lines = ["| " + " | ".join(header) + " |",
                 "|" + "|".join(["---"] * len(header)) + "|"]
        for g in rows:
            fields = [f if f != "" else "-" for f in _row_fields(g)]
            lines.append("| " + " | ".join(fields) + " |")
        return ("\n".join(lines) + "\n").encode("ascii")
    raise MetricsError(f"unknown report format {fmt!r}")


# -- trace persistence -----------------------------------------------------------


def record_to_json(record):
    d = asdict(record)
    return json.dumps(d, sort_keys=True, separators=(",", ":"))


def record_from_json(line):
    d = json.loads(line)
    rec = EpisodeRecord(**d)
    rec.validate()
    return rec


def records_to_jsonl(records):
    recs = sorted(records, key=lambda r: r.episode_id)
    return ("\n".join(record_to_json(r) for r in recs)
            + ("\n" if recs else "")).encode("ascii")


def records_from_jsonl(data):
    if isinstance(data, bytes):
        data = data.decode("ascii")
    return [record_from_json(ln) for ln in data.splitlines() if ln.strip()]
