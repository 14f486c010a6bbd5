import math

import numpy as np
import pytest

from sentinel.errors import EmptyInput, LengthMismatch, NoGroundTruth, SpecMismatch
from sentinel.metrics import (
    MetricReport,
    RatingHistogram,
    TickTruth,
    average_precision,
    bev_miou,
    classification_report,
    detection_map,
    full_per_class,
    gt_record,
    match_detections,
    motion_vpq,
    rate_alert,
    rate_alerts,
    tp_metrics,
)
from sentinel.reasoning.loop import SafetyAlert
from sentinel.reasoning.missions import Mission
from sentinel.sensing import BevGrid, Detection3D, GridSpec
from tests.oracles import greedy_match_oracle
from tests.test_world import make_actor


def det(x=0.0, y=0.0, conf=0.9, kind="car", yaw=0.0, length=4.0, width=2.0, speed=0.0):
    return Detection3D(kind=kind, x=x, y=y, yaw=yaw, length=length, width=width,
                       confidence=conf, speed=speed)


def alert(evidence, mission=Mission.ACCIDENT_PREDICTION, tick=0, fallback=False):
    return SafetyAlert(mode="active", mission=mission, severity="Warning",
                       text="t", evidence=tuple(evidence), tick=tick,
                       fallback=fallback)


# ---------------------------------------------------------------------------
# matching

def test_exact_match():
    preds = [det(0, 0), det(5, 5, kind="van")]
    gts = [det(0, 0, conf=1.0), det(5, 5, conf=1.0, kind="van")]
    m = match_detections(preds, gts)
    assert len(m.pairs) == 2
    assert all(d == 0.0 for _, _, d in m.pairs)
    assert m.unmatched_preds == ()
    assert m.unmatched_gts == ()


def test_unmatched_pred():
    m = match_detections([det(0, 0)], [])
    assert m.pairs == ()
    assert m.unmatched_preds == (0,)


def test_greedy_order_instance():
    # high-confidence pred grabs the shared nearest gt first
    preds = [det(0.0, 0, conf=0.5), det(0.4, 0, conf=0.9), det(10, 0, conf=0.8)]
    gts = [det(0.5, 0, conf=1.0), det(0.0, 0, conf=1.0), det(10, 0, conf=1.0)]
    m = match_detections(preds, gts, 2.0)
    oracle = greedy_match_oracle(preds, gts, 2.0)
    assert [(p, g) for p, g, _ in m.pairs] == [(p, g) for p, g, _ in oracle]
    # pred 1 (conf .9) takes gt 0 at 0.1 m; pred 0 falls back to gt 1
    assert dict((p, g) for p, g, _ in m.pairs) == {1: 0, 0: 1, 2: 2}


def test_class_gate():
    m = match_detections([det(0, 0, kind="truck")], [det(0, 0)])
    assert m.pairs == ()


# ---------------------------------------------------------------------------
# average precision

def test_perfect_single_match():
    assert average_precision([det(0, 0)], [det(0, 0, conf=1.0)]) == 1.0


def test_fp_then_tp_half():
    preds = [det(50, 50, conf=0.9), det(0, 0, conf=0.8)]
    gts = [det(0, 0, conf=1.0)]
    assert average_precision(preds, gts) == pytest.approx(0.5)


def test_no_predictions_zero():
    assert average_precision([], [det(0, 0)]) == 0.0


def test_no_ground_truth_raises():
    with pytest.raises(NoGroundTruth):
        average_precision([det(0, 0)], [])


def test_confidence_rescaling_invariant():
    rng = np.random.default_rng(3)
    preds = [det(rng.uniform(-5, 5), rng.uniform(-5, 5), conf=c)
             for c in rng.uniform(0.1, 0.9, size=8)]
    gts = [det(rng.uniform(-5, 5), rng.uniform(-5, 5), conf=1.0) for _ in range(5)]
    base = average_precision(preds, gts)
    scaled = [
        Detection3D(kind=p.kind, x=p.x, y=p.y, yaw=p.yaw, length=p.length,
                    width=p.width, confidence=p.confidence * 0.5, speed=p.speed)
        for p in preds
    ]
    assert average_precision(scaled, gts) == pytest.approx(base, abs=1e-12)


def test_detection_map_macro_over_classes():
    preds = [det(0, 0), det(9, 9, kind="van", conf=0.8)]
    gts = [det(0, 0, conf=1.0), det(5, 5, conf=1.0, kind="van")]
    # car AP 1.0, van AP 0.0
    assert detection_map(preds, gts) == pytest.approx(0.5)


# ---------------------------------------------------------------------------
# true-positive error metrics

def test_identical_pairs_zero_errors():
    preds = [det(1, 2, yaw=0.3)]
    gts = [det(1, 2, yaw=0.3, conf=1.0)]
    out = tp_metrics(match_detections(preds, gts), preds, gts)
    assert out["car"] == {"mATE": 0.0, "mASE": 0.0, "mAOE": 0.0, "mAVE": 0.0}


def test_translation_error():
    preds = [det(0.3, 0.4)]
    gts = [det(0, 0, conf=1.0)]
    out = tp_metrics(match_detections(preds, gts), preds, gts)
    assert out["car"]["mATE"] == pytest.approx(0.5)


def test_surface_error_from_size_mismatch():
    preds = [det(0, 0, length=4.0, width=2.0)]
    gts = [det(0, 0, conf=1.0, length=2.0, width=2.0)]
    out = tp_metrics(match_detections(preds, gts), preds, gts)
    assert out["car"]["mASE"] == pytest.approx(0.5)  # IoU 4/8


def test_orientation_wrap():
    preds = [det(0, 0, yaw=math.pi - 0.1)]
    gts = [det(0, 0, yaw=-math.pi + 0.1, conf=1.0)]
    out = tp_metrics(match_detections(preds, gts), preds, gts)
    assert out["car"]["mAOE"] == pytest.approx(0.2, abs=1e-9)


def test_report_shape_all_four_classes():
    per_class = full_per_class({"car": {"mATE": 0.1, "mASE": 0, "mAOE": 0, "mAVE": 0}})
    assert list(per_class) == ["car", "truck", "van", "pedestrian"]
    assert per_class["truck"] is None
    report = MetricReport(detection_map=1.0, per_class=per_class,
                          bev_miou=1.0, motion_vpq=1.0)
    text = report.to_text()
    for cls in ("Car", "Truck", "Van", "Pedestrian"):
        assert cls in text
    for col in ("mATE (m)", "mASE (1-IoU)", "mAOE (rad)", "mAVE (m/s)"):
        assert col in text


# ---------------------------------------------------------------------------
# grids

def grid(vals):
    arr = np.array(vals, dtype=float)
    spec = GridSpec(cells_x=arr.shape[1], cells_y=arr.shape[0])
    return BevGrid(spec, arr)


def test_miou_identical():
    g = grid([[0.9, 0.3], [0.3, 0.9]])
    assert bev_miou(g, g) == 1.0


def test_miou_counts():
    pred = grid([[0.9, 0.9, 0.9, 0.9, 0.3, 0.3]])
    gt = grid([[0.3, 0.3, 0.9, 0.9, 0.9, 0.9]])
    assert bev_miou(pred, gt) == pytest.approx(2.0 / 6.0)


def test_miou_both_empty():
    g = grid([[0.3, 0.3]])
    assert bev_miou(g, g) == 1.0


def test_miou_symmetric():
    a = grid([[0.9, 0.3, 0.9]])
    b = grid([[0.3, 0.9, 0.9]])
    assert bev_miou(a, b) == bev_miou(b, a)


def test_miou_spec_mismatch():
    with pytest.raises(SpecMismatch):
        bev_miou(grid([[0.9]]), grid([[0.9, 0.3]]))


def mask(bits):
    return np.array(bits, dtype=bool)


def test_vpq_perfect():
    frames = [{1: mask([1, 1, 0, 0]), 2: mask([0, 0, 1, 1])}]
    assert motion_vpq(frames, frames) == 1.0


def test_vpq_tp_with_fn():
    pred = [{1: mask([1, 1, 1, 1, 0])}]
    gt = [{1: mask([1, 1, 1, 1, 1]), 2: mask([0, 0, 0, 0, 0, 1])[:5]}]
    # IoU = 4/5 = 0.8 TP; one FN -> 0.8 / 1.5
    gt = [{1: mask([1, 1, 1, 1, 1]), 2: mask([0, 0, 0, 0, 0])}]
    # make the second gt instance non-empty but unmatched
    gt[0][2] = mask([0, 0, 0, 0, 1])
    pred[0][1] = mask([1, 1, 1, 1, 0])
    gt[0][1] = mask([1, 1, 1, 1, 1])
    assert motion_vpq(pred, gt) == pytest.approx(0.8 / 1.5)


def test_vpq_empty_tick_counts_full():
    assert motion_vpq([{}], [{}]) == 1.0


# ---------------------------------------------------------------------------
# classification

def test_classification_perfect():
    out = classification_report(["a", "b"], ["a", "b"])
    assert out == {"accuracy": 1.0, "precision": 1.0, "recall": 1.0, "f1": 1.0}


def test_classification_worked_example():
    out = classification_report(["A", "B", "B"], ["A", "A", "B"])
    assert out["accuracy"] == pytest.approx(2 / 3)
    assert out["precision"] == pytest.approx(0.75)
    assert out["recall"] == pytest.approx(0.75)
    assert out["f1"] == pytest.approx(2 / 3)


def test_classification_empty():
    with pytest.raises(EmptyInput):
        classification_report([], [])


def test_classification_length_mismatch():
    with pytest.raises(LengthMismatch):
        classification_report(["a"], ["a", "b"])


def test_unpredicted_class_zero_precision():
    out = classification_report(["a", "a"], ["a", "b"])
    # class a: P = 1/2; class b: no predicted positives -> P = 0
    assert out["precision"] == pytest.approx(0.25)


# ---------------------------------------------------------------------------
# alert rating

TRUTH = {0: TickTruth(track_ids={1, 2}, collision_ttc={(1, 2): 2.0})}
TRUTH_LATE = {0: TickTruth(track_ids={1, 2}, collision_ttc={(1, 2): 0.4})}


def test_good_alert():
    assert rate_alert(alert(["track:1", "collision:1-2"]), TRUTH) == "Good"


def test_middle_alert_track_only():
    assert rate_alert(alert(["track:1"]), TRUTH) == "Middle"


def test_normal_alert_collision_late():
    # grounded collision ref but not timely, no track named
    assert rate_alert(alert(["collision:1-2"]), TRUTH_LATE) == "Normal"


def test_bad_alert_unknown_track():
    assert rate_alert(alert(["track:99"]), TRUTH) == "Bad"


def test_bad_alert_fallback():
    assert rate_alert(alert(["track:1"], fallback=True), TRUTH) == "Bad"


def test_bad_alert_no_evidence():
    assert rate_alert(alert([]), TRUTH) == "Bad"


def test_untimely_collision_caps_at_middle():
    assert rate_alert(alert(["track:1", "collision:1-2"]), TRUTH_LATE) == "Middle"


def test_histogram_counts_conserved():
    alerts = [alert(["track:1"]) for _ in range(7)]
    alerts += [alert([], mission=Mission.SAFETY_EVALUATION) for _ in range(3)]
    hist = rate_alerts(alerts, TRUTH)
    assert hist.total() == 10
    table = hist.table()
    assert set(table) == {m.value for m in Mission}
    assert table["accident_prediction"]["Middle"] == pytest.approx(100.0)
    assert table["safety_evaluation"]["Bad"] == pytest.approx(100.0)


def test_buckets_exhaustive_and_exclusive():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n_ev = int(rng.integers(0, 3))
        evidence = []
        for _ in range(n_ev):
            if rng.uniform() < 0.5:
                evidence.append(f"track:{int(rng.integers(1, 4))}")
            else:
                evidence.append("collision:1-2")
        a = alert(evidence, fallback=bool(rng.uniform() < 0.2))
        bucket = rate_alert(a, TRUTH if rng.uniform() < 0.8 else TRUTH_LATE)
        assert bucket in ("Good", "Middle", "Normal", "Bad")


def test_gt_record_from_actor():
    rec = gt_record(make_actor("a", x=1.0, y=2.0))
    assert rec.confidence == 1.0
    assert (rec.x, rec.y) == (1.0, 2.0)
