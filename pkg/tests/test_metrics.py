import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_clearmot, random_micro_sequence

from hgttrack.association import Box
from hgttrack.metrics import (
    AlignmentError,
    both_visible_count,
    clearmot,
    evaluate,
    hota,
    hota_scores,
    id_scores,
    idf1,
)
from hgttrack.mot import MotRecord


def r(frame, tid, x, y=10.0, w=4.0, cls=1):
    return MotRecord(frame, tid, Box(x, y, w, w), 1.0, cls)


def relabel(records, mapping):
    return [MotRecord(p.frame, mapping[p.track_id], p.box, p.conf, p.class_id, p.visibility) for p in records]


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**31))
def test_clearmot_counts_match_brute_force(seed):
    gt, pred, T = random_micro_sequence(np.random.default_rng(seed))
    cm = clearmot(gt, pred, 0.3, T)
    assert (cm.FP, cm.FN, cm.IDs) == brute_clearmot(gt, pred, 0.3, T)
    assert cm.TP + cm.FN == cm.GT == len(gt)
    assert cm.TP + cm.FP == len(pred)


def test_hand_computed_mota():
    # 2 targets x 5 frames; one miss per target, one stray box and one switch
    gt = [r(f, 1, 10) for f in range(1, 6)] + [r(f, 2, 40) for f in range(1, 6)]
    pred = [r(f, 11, 10) for f in (1, 2, 3)] + [r(5, 12, 10)]
    pred += [r(f, 21, 40) for f in (1, 2, 3, 4)] + [r(3, 99, 70)]
    cm = clearmot(gt, pred, 0.3)
    assert (cm.GT, cm.FN, cm.FP, cm.IDs) == (10, 2, 1, 1)
    assert cm.MOTA == pytest.approx(0.6)


def test_continuity_keeps_the_previous_pairing():
    # frame 2: pred 12 sits slightly closer, but 11 still overlaps enough
    gt = [r(1, 1, 10), r(2, 1, 10)]
    pred = [r(1, 11, 10), r(2, 11, 11.0), r(2, 12, 10.2)]
    cm = clearmot(gt, pred, 0.3)
    assert cm.IDs == 0 and cm.FP == 1


def test_motp_is_mean_iou_of_matches():
    gt = [r(1, 1, 10), r(2, 1, 10)]
    pred = [r(1, 5, 10), r(2, 5, 11)]
    assert clearmot(gt, pred).MOTP == pytest.approx((1.0 + 3 / 5) / 2)


def test_idf1_half_split():
    gt = [r(f, 1, 10) for f in range(1, 11)]
    pred = [r(f, 5 if f <= 5 else 6, 10) for f in range(1, 11)]
    s = id_scores(gt, pred)
    assert (s.IDTP, s.IDFP, s.IDFN) == (5, 5, 5)
    assert s.IDF1 == pytest.approx(0.5)


def test_perfect_prediction_scores_one():
    gt = [r(f, t, 10 + 20 * t) for f in range(1, 6) for t in (1, 2)]
    rep = evaluate(gt, list(gt))
    assert (rep.HOTA, rep.MOTA, rep.MOTP, rep.IDF1) == (pytest.approx(1.0),) * 4
    assert rep.MT == 2 and rep.ML == 0
    assert hota([r(1, 1, 10)], [r(1, 3, 10)]) == pytest.approx(1.0)


def test_empty_prediction():
    gt = [r(f, 1, 10) for f in range(1, 4)]
    rep = evaluate(gt, [])
    assert rep.MOTA == 0.0 and rep.FN == 3 and rep.IDF1 == 0.0 and rep.HOTA == 0.0 and rep.ML == 1


def test_empty_ground_truth():
    assert clearmot([], [r(1, 1, 10)]).MOTA == -1.0
    assert clearmot([], []).MOTA == 1.0


def test_hota_decomposes_into_det_and_ass():
    gt = [r(f, 1, 10) for f in range(1, 11)]
    pred = [r(f, 5 if f <= 5 else 6, 10) for f in range(1, 11)]
    s = hota_scores(gt, pred)
    assert s.DetA == pytest.approx(1.0)
    assert s.AssA == pytest.approx(0.5)
    assert s.HOTA == pytest.approx(np.sqrt(0.5))
    assert len(s.per_alpha) == 19


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_metrics_ignore_prediction_labels(seed):
    gt, pred, T = random_micro_sequence(np.random.default_rng(seed))
    ids = sorted({p.track_id for p in pred})
    perm = np.random.default_rng(seed + 1).permutation(len(ids))
    mapped = relabel(pred, {a: 5000 + int(b) for a, b in zip(ids, perm)})
    mapped.sort(key=lambda p: (p.frame, p.track_id))
    a, b = evaluate(gt, pred, 0.3, T, per_class=False), evaluate(gt, mapped, 0.3, T, per_class=False)
    assert a.as_dict() == pytest.approx(b.as_dict())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_injected_switch_never_raises_mota(seed):
    gt, pred, T = random_micro_sequence(np.random.default_rng(seed))
    if T < 2 or not pred:
        return
    cut = T // 2 + 1
    switched = [MotRecord(p.frame, p.track_id + 10_000 if p.frame >= cut else p.track_id, p.box)
                for p in pred]
    assert clearmot(gt, switched, 0.3, T).MOTA <= clearmot(gt, pred, 0.3, T).MOTA + 1e-12
    assert idf1(gt, switched, 0.3, T) <= idf1(gt, pred, 0.3, T) + 1e-12


def test_alignment_errors():
    with pytest.raises(AlignmentError):
        clearmot([r(5, 1, 10)], [], num_frames=3)
    with pytest.raises(AlignmentError):
        clearmot([r(1, 1, 10), r(1, 1, 20)], [])


def test_per_class_breakdown_and_report_text():
    gt = [r(1, 1, 10, cls=1), r(1, 2, 40, cls=4)]
    pred = [r(1, 7, 10, cls=1)]
    rep = evaluate(gt, pred)
    assert set(rep.per_class) == {"ship", "car"}
    assert rep.per_class["ship"].MOTA == 1.0 and rep.per_class["car"].FN == 1
    kv = rep.keyvalue()
    assert "MOTA=0.500000" in kv and "car.FN=1" in kv
    assert rep.table().splitlines()[0].split()[:3] == ["name", "HOTA", "MOTA"]


def test_both_visible_count():
    assert both_visible_count([r(1, 1, 10), r(2, 1, 10)], [r(2, 1, 10), r(3, 1, 10)]) == 1
