"""Independent trace re-scan behind the `replay` command.

Recomputes every report aggregate with plain loops over the raw trace JSON,
sharing no code with metrics.aggregate, and cross-checks internal consistency
(tampered success flags, path lengths, group SPL <= SR).  The rendered CSV
must match the original report byte for byte.
"""

from __future__ import annotations

import json
import math

REPLAY_HEADER = ("corruption,visual,dynamics,sensor,difficulty,n,sr,spl,"
                 "failed_actions,term_dist,min_dist,stop_fail_pos,"
                 "stop_fail_neg,oracle_sr,mean_steps")


def scan_traces(jsonl_text):
    """Parse trace lines into raw dicts, verifying per-episode consistency.
    Returns (episodes, problems)."""
    episodes = []
    problems = []
    for ln_no, ln in enumerate(jsonl_text.splitlines()):
        if not ln.strip():
            continue
        d = json.loads(ln)
        eid = d.get("episode_id", f"line {ln_no}")
        end_invoked = bool(d["actions"]) and d["actions"][-1] == "end"
        if "end" in d["actions"][:-1]:
            problems.append(f"{eid}: end action before the final step")
        if end_invoked != d["end_invoked"]:
            problems.append(f"{eid}: end_invoked flag contradicts actions")
        end_in_range = end_invoked and bool(d["in_range"][-1])
        if end_invoked and end_in_range != d["end_in_range"]:
            problems.append(f"{eid}: end_in_range flag contradicts in_range trace")
        derived_success = end_invoked and end_in_range and not d.get("aborted", False)
        if derived_success != d["success"]:
            problems.append(f"{eid}: success flag contradicts the trace "
                            f"(stored {d['success']}, derived {derived_success})")
        p = 0.0
        for a, b in zip(d["poses"], d["poses"][1:]):
            p += math.hypot(b[0] - a[0], b[1] - a[1])
        if abs(p - d["p"]) > 1e-9:
            problems.append(f"{eid}: stored p {d['p']} != recomputed {p}")
        if len(d["poses"]) != d["steps"] + 1:
            problems.append(f"{eid}: poses length != steps + 1")
        for name in ("actions", "failed", "in_range", "geo", "euclid"):
            if len(d[name]) != d["steps"]:
                problems.append(f"{eid}: {name} length != steps")
        d["_p"] = p
        d["_success"] = derived_success
        episodes.append(d)
    return episodes, problems


def recompute(episodes):
    """Brute-force aggregates keyed by the full group tuple."""
    groups = {}
    for d in episodes:
        key = (d["corruption"], d["visual"], d["dynamics"], d["sensor"],
               d["difficulty"])
        groups.setdefault(key, []).append(d)

    out = {}
    for key, ds in groups.items():
        n = len(ds)
        succ = 0
        spl_sum = 0.0
        fails = 0
        term = 0.0
        mind = 0.0
        orac = 0
        steps_sum = 0
        end_count = 0
        end_out_of_range = 0
        sfn_rates = []
        for d in ds:
            success = d["_success"]
            succ += int(success)
            if success:
                spl_sum += d["length"] / max(d["length"], d["_p"])
            fails += sum(1 for f in d["failed"] if f)
            dists = [d["start_euclid"]] + list(d["euclid"])
            term += dists[-1]
            mind += min(dists)
            orac += int(any(d["in_range"]))
            steps_sum += d["steps"]
            if d["actions"] and d["actions"][-1] == "end":
                end_count += 1
                if not d["in_range"][-1]:
                    end_out_of_range += 1
            denom = 0
            missed = 0
            for i, flag in enumerate(d["in_range"]):
                if d["actions"][i] == "end" or not flag:
                    continue
                denom += 1
                follows_end = (i + 1 < len(d["actions"])
                               and d["actions"][i + 1] == "end")
                if not follows_end:
                    missed += 1
            if denom:
                sfn_rates.append(missed / denom)
        out[key] = {
            "n": n,
            "sr": succ / n,
            "spl": spl_sum / n,
            "failed_actions": fails / n,
            "term_dist": term / n,
            "min_dist": mind / n,
            "stop_fail_pos": (end_out_of_range / end_count) if end_count else None,
            "stop_fail_neg": (sum(sfn_rates) / len(sfn_rates)) if sfn_rates else None,
            "oracle_sr": orac / n,
            "mean_steps": steps_sum / n,
        }
    return out


def render_csv(groups):
    def pct(v):
        return "" if v is None else f"{100.0 * v:.2f}"

    rows = []
    for key, g in groups.items():
        corruption, visual, dynamics, sensor, difficulty = key
        rows.append(((-g["spl"], corruption, visual, dynamics, sensor, difficulty), [
            corruption,
            "1" if visual else "0",
            "1" if dynamics else "0",
            sensor,
            difficulty,
            str(g["n"]),
            pct(g["sr"]),
            pct(g["spl"]),
            f"{g['failed_actions']:.4f}",
            f"{g['term_dist']:.4f}",
            f"{g['min_dist']:.4f}",
            pct(g["stop_fail_pos"]),
            pct(g["stop_fail_neg"]),
            pct(g["oracle_sr"]),
            f"{g['mean_steps']:.2f}",
        ]))
    rows.sort(key=lambda kv: kv[0])
    lines = [REPLAY_HEADER] + [",".join(fields) for _, fields in rows]
    return ("\n".join(lines) + "\n").encode("ascii")


def check_group_invariants(groups):
    problems = []
    for key, g in groups.items():
        if g["spl"] > g["sr"] + 1e-12:
            problems.append(f"group {key}: SPL {g['spl']:.6f} exceeds SR {g['sr']:.6f}")
        if g["oracle_sr"] + 1e-12 < g["sr"]:
            problems.append(f"group {key}: oracle SR below SR")
        for name in ("sr", "spl", "oracle_sr"):
            if not 0.0 <= g[name] <= 1.0:
                problems.append(f"group {key}: {name} outside [0, 1]")
    return problems


def replay_run(traces_text, report_bytes):
    """Full replay: returns (ok, messages)."""
    episodes, problems = scan_traces(traces_text)
    groups = recompute(episodes)
    problems += check_group_invariants(groups)
    rebuilt = render_csv(groups)
    if rebuilt != report_bytes:
        problems.append("recomputed report does not match the stored report")
    return (not problems), problems
