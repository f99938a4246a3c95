import math

import numpy as np
import pytest

from robustnav import metrics as mt


def make_record(episode_id="e0", success=True, end_invoked=True,
                end_in_range=True, length=2.0, steps=4, poses=None,
                actions=None, failed=None, in_range=None, euclid=None,
                start_euclid=2.0, corruption="Clean", visual=False,
                dynamics=False, sensor="rgbd", difficulty="easy", geo=None):
    if poses is None:
        poses = [[0.0, 0.0, 0.0, 0.0]]
        for i in range(steps):
            poses.append([0.5 * (i + 1), 0.0, 0.0, 0.0])
    if actions is None:
        actions = ["move_ahead"] * (steps - 1) + (["end"] if end_invoked
                                                  else ["move_ahead"])
    failed = failed if failed is not None else [False] * steps
    in_range = in_range if in_range is not None else (
        [False] * (steps - 1) + [end_in_range])
    euclid = euclid if euclid is not None else [
        max(start_euclid - 0.5 * (i + 1), 0.0) for i in range(steps)]
    geo = geo if geo is not None else list(euclid)
    rec = mt.EpisodeRecord(
        episode_id=episode_id, scene_id="s", task="pointnav",
        corruption=corruption, visual=visual, dynamics=dynamics,
        sensor=sensor, difficulty=difficulty,
        success=success, end_invoked=end_invoked, end_in_range=end_in_range,
        length=length, p=mt.path_length_of(poses), steps=steps,
        start_euclid=start_euclid, poses=poses, actions=actions,
        failed=failed, in_range=in_range, geo=geo, euclid=euclid)
    rec.validate()
    return rec


def test_spl_hand_values():
    optimal = make_record(length=2.0, steps=4)  # p == 2.0 == l
    assert mt.spl(optimal) == 1.0
    failure = make_record(success=False, end_invoked=False,
                          end_in_range=False, length=2.0, steps=4)
    assert mt.spl(failure) == 0.0
    twice = make_record(length=1.0, steps=4)  # p == 2.0 == 2 l
    assert mt.spl(twice) == 0.5


def test_spl_rejects_degenerate_length():
    rec = make_record(length=0.0)
    with pytest.raises(mt.MetricsError):
        mt.spl(rec)


def test_spl_never_exceeds_one():
    # p shorter than l cannot produce spl > 1
    rec = make_record(length=5.0, steps=2)
    assert mt.spl(rec) == 1.0


def test_aggregate_simple_arithmetic():
    recs = [
        make_record("a", length=2.0, steps=4),               # spl 1.0
        make_record("b", length=1.0, steps=4),               # spl 0.5
        make_record("c", success=False, end_invoked=False,
                    end_in_range=False, steps=4),            # spl 0.0
    ]
    g = mt.aggregate(recs)[0]
    assert g.n == 3
    assert g.sr == pytest.approx(2 / 3)
    assert g.spl == pytest.approx((1.0 + 0.5 + 0.0) / 3)


def test_stop_fail_pos_out_of_range_end():
    rec = make_record(end_in_range=False, success=False)
    g = mt.aggregate([rec])[0]
    assert g.stop_fail_pos == 1.0
    assert g.sr == 0.0


def test_stop_fail_neg_counts_missed_in_range_steps():
    # in range at steps 1 and 2 (0-indexed), ends at step 3
    rec = make_record(steps=4, in_range=[False, True, True, True],
                      actions=["move_ahead", "move_ahead", "move_ahead", "end"])
    g = mt.aggregate([rec])[0]
    # step 1 not followed by end (miss), step 2 followed by end (hit);
    # the end step itself is excluded from the denominator
    assert g.stop_fail_neg == pytest.approx(0.5)


def test_oracle_sr_at_least_sr():
    recs = [
        make_record("a"),
        make_record("b", success=False, end_invoked=False, end_in_range=False,
                    in_range=[False, True, False, False]),
        make_record("c", success=False, end_invoked=False, end_in_range=False),
    ]
    g = mt.aggregate(recs)[0]
    assert g.oracle_sr == pytest.approx(2 / 3)
    assert g.oracle_sr >= g.sr


def test_group_splitting_and_sorting():
    recs = [make_record("a", corruption="Clean"),
            make_record("b", corruption="Spatter (S5)", visual=True,
                        length=1.0)]
    groups = mt.aggregate(recs)
    assert len(groups) == 2
    data = mt.emit_report(groups, "csv").decode()
    lines = data.strip().split("\n")
    assert lines[0] == mt.CSV_HEADER
    assert len(lines) == 3
    # sorted by SPL descending: clean (1.0) before spatter (0.5)
    assert lines[1].startswith("Clean")


def test_emit_report_deterministic_and_empty():
    recs = [make_record("a"), make_record("b", length=1.0)]
    groups = mt.aggregate(recs)
    assert mt.emit_report(groups, "csv") == mt.emit_report(groups, "csv")
    empty = mt.emit_report([], "csv")
    assert empty.decode().strip() == mt.CSV_HEADER
    md = mt.emit_report(groups, "markdown").decode()
    assert md.startswith("| corruption |")
    with pytest.raises(mt.MetricsError):
        mt.emit_report(groups, "yaml")


def test_record_jsonl_roundtrip():
    recs = [make_record("a"), make_record("b", length=1.0)]
    data = mt.records_to_jsonl(recs)
    back = mt.records_from_jsonl(data)
    assert mt.records_to_jsonl(back) == data


def test_validation_catches_inconsistency():
    rec = make_record()
    rec.success = True
    rec.end_invoked = False
    with pytest.raises(mt.MetricsError):
        rec.validate()


# -- brute-force oracle over 50 randomized synthetic traces -------------------------


def synth_record(rng, i):
    steps = int(rng.integers(1, 40))
    poses = [[float(rng.uniform(0, 8)), float(rng.uniform(0, 8)), 0.0, 0.0]]
    for _ in range(steps):
        poses.append([poses[-1][0] + float(rng.normal(0, 0.2)),
                      poses[-1][1] + float(rng.normal(0, 0.2)), 0.0, 0.0])
    end_invoked = bool(rng.random() < 0.6)
    actions = [str(rng.choice(["move_ahead", "rotate_left", "rotate_right"]))
               for _ in range(steps - 1)]
    actions.append("end" if end_invoked else "move_ahead")
    in_range = [bool(rng.random() < 0.25) for _ in range(steps)]
    end_in_range = end_invoked and in_range[-1]
    failed = [bool(rng.random() < 0.2) for _ in range(steps)]
    euclid = [float(rng.uniform(0, 6)) for _ in range(steps)]
    return mt.EpisodeRecord(
        episode_id=f"syn{i:03d}", scene_id="s", task="pointnav",
        corruption=str(rng.choice(["Clean", "Speckle Noise (S5)"])),
        visual=bool(rng.random() < 0.5), dynamics=False, sensor="rgbd",
        difficulty=str(rng.choice(["easy", "medium", "hard"])),
        success=end_invoked and end_in_range,
        end_invoked=end_invoked, end_in_range=end_in_range,
        length=float(rng.uniform(0.5, 8.0)), p=mt.path_length_of(poses),
        steps=steps, start_euclid=float(rng.uniform(0, 6)), poses=poses,
        actions=actions, failed=failed, in_range=in_range,
        geo=list(euclid), euclid=euclid)


def brute_force(records):
    """Independent re-scan: plain loops, no shared code with aggregate()."""
    out = {}
    keys = sorted({(r.corruption, r.visual, r.dynamics, r.sensor, r.difficulty)
                   for r in records})
    for key in keys:
        rs = [r for r in records
              if (r.corruption, r.visual, r.dynamics, r.sensor,
                  r.difficulty) == key]
        n = len(rs)
        ends = sum(1 for r in rs if r.actions[-1] == "end")
        bad_ends = sum(1 for r in rs
                       if r.actions[-1] == "end" and not r.in_range[-1])
        sfn = []
        for r in rs:
            denom = miss = 0
            for t in range(r.steps):
                if r.actions[t] == "end" or not r.in_range[t]:
                    continue
                denom += 1
                if t + 1 >= r.steps or r.actions[t + 1] != "end":
                    miss += 1
            if denom:
                sfn.append(miss / denom)
        out[key] = {
            "sr": sum(r.success for r in rs) / n,
            "failed_actions": sum(sum(r.failed) for r in rs) / n,
            "term_dist": sum(r.euclid[-1] for r in rs) / n,
            "min_dist": sum(min([r.start_euclid] + r.euclid) for r in rs) / n,
            "stop_fail_pos": bad_ends / ends if ends else None,
            "stop_fail_neg": sum(sfn) / len(sfn) if sfn else None,
            "oracle_sr": sum(1 for r in rs if True in r.in_range) / n,
        }
    return out


def test_aggregate_matches_brute_force_on_50_synthetic_traces():
    rng = np.random.default_rng(77)
    records = [synth_record(rng, i) for i in range(50)]
    for r in records:
        r.validate()
    groups = mt.aggregate(records)
    oracle = brute_force(records)
    assert len(groups) == len(oracle)
    for g in groups:
        key = (g.corruption, g.visual, g.dynamics, g.sensor, g.difficulty)
        o = oracle[key]
        assert g.sr == pytest.approx(o["sr"], abs=1e-12)
        assert g.failed_actions == pytest.approx(o["failed_actions"], abs=1e-12)
        assert g.term_dist == pytest.approx(o["term_dist"], abs=1e-12)
        assert g.min_dist == pytest.approx(o["min_dist"], abs=1e-12)
        assert g.oracle_sr == pytest.approx(o["oracle_sr"], abs=1e-12)
        if o["stop_fail_pos"] is None:
            assert g.stop_fail_pos is None
        else:
            assert g.stop_fail_pos == pytest.approx(o["stop_fail_pos"], abs=1e-12)
        if o["stop_fail_neg"] is None:
            assert g.stop_fail_neg is None
        else:
            assert g.stop_fail_neg == pytest.approx(o["stop_fail_neg"], abs=1e-12)
        assert g.oracle_sr >= g.sr
        assert g.spl <= g.sr + 1e-12


def test_p_matches_pose_recomputation():
    rng = np.random.default_rng(3)
    for i in range(10):
        rec = synth_record(rng, i)
        assert rec.recompute_p() == pytest.approx(rec.p, abs=1e-9)
