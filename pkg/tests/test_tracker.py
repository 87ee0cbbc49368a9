import numpy as np
import pytest

from hgttrack.association import VIS_BOTH, VIS_T, Box
from hgttrack.mot import MotRecord
from hgttrack.tracker import (
    ACTIVE,
    LOST,
    TENTATIVE,
    TERMINATED,
    ModalityEvidence,
    OraclePerception,
    TargetState,
    TrackerConfig,
    Tracklet,
    lifecycle,
    redet,
    redet_threshold,
    run_tracker,
    search_region,
)

SIZE = (64, 64)


def rec(frame, tid, x, y, vis=1.0, w=8.0):
    return MotRecord(frame, tid, Box(x, y, w, w), 1.0, 1, vis)


def oracle(gt_v, gt_t, frames):
    return OraclePerception({"V": gt_v, "T": gt_t}, SIZE, frames)


def ids(records):
    return sorted({r.track_id for r in records})


@pytest.mark.parametrize("det, c, expected", [(0.4, 0.0, 0.4), (0.4, 0.6, 0.25), (0.5, 1.0, 0.25)])
def test_redet_threshold_values(det, c, expected):
    assert redet_threshold(det, c) == pytest.approx(expected)


def test_lifecycle_activation_loss_and_termination():
    cfg = TrackerConfig()
    t = Tracklet(TargetState(1))
    hit = {"V": True, "T": False}
    miss = {"V": False, "T": False}
    assert lifecycle(t, hit, cfg, 0) == [] and t.state == TENTATIVE
    lifecycle(t, hit, cfg, 1)
    assert lifecycle(t, hit, cfg, 2) == ["activate"] and t.state == ACTIVE and t.emit_from == 0
    assert lifecycle(t, miss, cfg, 3) == ["lost"] and t.state == LOST
    assert lifecycle(t, hit, cfg, 4) == [] and t.state == ACTIVE
    events = [lifecycle(t, miss, cfg, 5 + i) for i in range(cfg.max_lost + 1)]
    assert events[-1] == ["terminate"] and t.state == TERMINATED
    assert all("terminate" not in e for e in events[:-1])
    assert lifecycle(t, hit, cfg, 99) == [] and t.state == TERMINATED


def test_tentative_run_restarts_after_a_miss():
    cfg = TrackerConfig()
    t = Tracklet(TargetState(1))
    for f, m in enumerate([True, True, False, True, True, True]):
        lifecycle(t, {"V": m, "T": False}, cfg, f)
    assert t.state == ACTIVE and t.emit_from == 3


def test_config_validation():
    with pytest.raises(ValueError):
        TrackerConfig(iou_tau=1.0)
    with pytest.raises(ValueError):
        TrackerConfig(redet_mode="both")
    with pytest.raises(ValueError):
        TrackerConfig(search_expand=0.5)


def test_single_target_gets_one_id_and_backfilled_records():
    gt = [rec(f, 7, 20 + f, 30) for f in range(1, 11)]
    res = run_tracker(oracle(gt, list(gt), 10))
    for m in "VT":
        assert [r.frame for r in res.records[m]] == list(range(1, 11))
        assert ids(res.records[m]) == [1]
    assert res.tracks[0].target.q == VIS_BOTH
    assert any(line.split()[1] == "activate" for line in res.events)


def test_short_lived_detection_is_never_reported():
    gt = [rec(1, 1, 20, 20), rec(2, 1, 21, 20)]
    res = run_tracker(oracle(gt, [], 5))
    assert res.records["V"] == [] and res.records["T"] == []


def test_frames_without_detections():
    res = run_tracker(oracle([], [], 4))
    assert res.records == {"V": [], "T": []} and res.tracks == []
    gt = [rec(f, 1, 30, 30) for f in (1, 2, 3, 6, 7)]
    res = run_tracker(oracle(gt, [], 8))
    assert ids(res.records["V"]) == [1]
    assert [r.frame for r in res.records["V"]] == [1, 2, 3, 6, 7]


def test_ids_are_not_reused_after_termination():
    gt = [rec(f, 1, 30, 30) for f in range(1, 5)] + [rec(f, 1, 30, 30) for f in range(30, 34)]
    res = run_tracker(oracle(gt, [], 34))
    assert ids(res.records["V"]) == [1, 2]
    assert any(line.split()[1:3] == ["terminate", "1"] for line in res.events)


def test_redet_recovers_a_weak_modality():
    gt_t = [rec(f, 1, 30, 30) for f in range(1, 16)]
    gt_v = [rec(f, 1, 30, 30, vis=1.0 if f <= 5 else 0.3) for f in range(1, 16)]
    with_redet = run_tracker(oracle(gt_v, gt_t, 15))
    without = run_tracker(oracle(gt_v, gt_t, 15), TrackerConfig(redet_enabled=False))
    assert len(with_redet.records["V"]) == 15
    assert len(without.records["V"]) == 5
    assert ids(with_redet.records["V"]) == ids(with_redet.records["T"]) == [1]
    assert any(line.split()[1] == "redet" for line in with_redet.events)


def test_redet_needs_prior_joint_visibility():
    gt_t = [rec(f, 1, 30, 30) for f in range(1, 10)]
    gt_v = [rec(f, 1, 30, 30, vis=0.3) for f in range(1, 10)]
    res = run_tracker(oracle(gt_v, gt_t, 9))
    assert res.records["V"] == []
    assert res.tracks[0].target.q == VIS_T


def _evidence_with_peak(cell, ident, grid=16):
    heat = np.zeros((grid, grid, 1))
    heat[cell[1], cell[0], 0] = 0.9
    queries = np.zeros((grid * grid, 1))
    queries[cell[1] * grid + cell[0], 0] = ident
    return ModalityEvidence(heat, np.full((grid, grid, 2), 2.0), np.full((grid, grid, 2), 0.5), queries, [])


def test_affinity_redet_rejects_zero_overlap_but_heatmap_mode_accepts():
    per = oracle([], [], 1)
    tg = TargetState(1)
    tg.boxes["V"] = Box(10, 10, 8, 8)
    tg.features["V"] = np.array([3.0])
    ev = _evidence_with_peak((12, 12), 3.0)  # box centred at (50, 50) in pixels
    other_box = Box(50, 50, 8, 8)
    assert redet(tg, "V", ev, per, TrackerConfig(), other_box, 0.9) is None
    d = redet(tg, "V", ev, per, TrackerConfig(redet_mode="heatmap"), other_box, 0.9)
    assert d is not None and d.box.x == pytest.approx(50.0)


def test_affinity_redet_accepts_overlapping_peak():
    per = oracle([], [], 1)
    tg = TargetState(1)
    tg.boxes["V"] = Box(10, 10, 8, 8)
    tg.features["V"] = np.array([3.0])
    ev = _evidence_with_peak((2, 2), 3.0)  # centre (10, 10)
    d = redet(tg, "V", ev, per, TrackerConfig(), Box(11, 10, 8, 8), 0.9)
    assert d is not None and d.score == pytest.approx(0.9)
    # a wrong identity is rejected by the affinity minimum
    ev = _evidence_with_peak((2, 2), 4.0)
    assert redet(tg, "V", ev, per, TrackerConfig(), Box(11, 10, 8, 8), 0.9) is None


def test_search_region_is_clipped_to_the_image():
    sr = search_region(Box(2, 2, 4, 4), Box(4, 4, 4, 4), 1.5, SIZE)
    assert sr.left == 0.0 and sr.top == 0.0
    assert sr.right == pytest.approx(3 + 3 * 1.5)


def test_tracker_is_deterministic():
    rng = np.random.default_rng(0)
    gt = []
    for tid in (1, 2, 3):
        x, y = rng.uniform(10, 50, 2)
        gt += [rec(f, tid, x + f * 0.5, y, vis=float(rng.uniform(0.2, 1.0))) for f in range(1, 21)]
    a = run_tracker(oracle(gt, gt[::2], 20))
    b = run_tracker(oracle(gt, gt[::2], 20))
    assert a.records == b.records and a.events == b.events


def test_q_state_reflects_observed_modalities():
    gt_v = [rec(f, 1, 30, 30) for f in range(1, 6)]
    gt_t = [rec(f, 1, 30, 30) for f in range(1, 4)]
    res = run_tracker(oracle(gt_v, gt_t, 5), TrackerConfig(redet_enabled=False))
    t = res.tracks[0]
    assert set(t.history[2]) == {"V", "T"} and set(t.history[4]) == {"V"}
