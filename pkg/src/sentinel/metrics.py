"""Evaluation suite: detection/motion metrics, classification scores, and
alert-quality rating buckets."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyInput,
    LengthMismatch,
    NoGroundTruth,
    SpecMismatch,
    ValidationError,
)
from .geometry import wrap_angle
from .reasoning.loop import SafetyAlert
from .reasoning.missions import MISSION_ORDER, Mission
from .sensing import BevGrid, Detection3D
from .world import ActorState

REPORT_CLASSES = ("car", "truck", "van", "pedestrian")
TP_METRIC_NAMES = ("mATE", "mASE", "mAOE", "mAVE")
RATING_BUCKETS = ("Good", "Middle", "Normal", "Bad")

TIMELY_MARGIN_S = 1.0


def gt_record(actor: ActorState) -> Detection3D:
    """Ground-truth actor as a detection record (confidence 1)."""
    return Detection3D(
        kind=actor.kind, x=actor.x, y=actor.y, yaw=actor.yaw,
        length=actor.length, width=actor.width,
        confidence=1.0, speed=actor.speed,
    )


# ---------------------------------------------------------------------------
# matching

@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[int, int, float], ...]  # (pred_idx, gt_idx, center_dist)
    unmatched_preds: tuple[int, ...]
    unmatched_gts: tuple[int, ...]


def match_detections(preds: list[Detection3D], gts: list[Detection3D],
                     dist_thresh_m: float = 2.0) -> MatchResult:
    """Greedy by descending confidence; each prediction takes the nearest
    free same-class ground truth within the threshold."""
    if dist_thresh_m <= 0:
        raise ValidationError("distance threshold must be positive")
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, i))
    taken: set[int] = set()
    pairs = []
    for pi in order:
        p = preds[pi]
        best_gi, best_d = -1, math.inf
        for gi, g in enumerate(gts):
            if gi in taken or g.kind != p.kind:
                continue
            d = math.hypot(p.x - g.x, p.y - g.y)
            if d <= dist_thresh_m and d < best_d:
                best_gi, best_d = gi, d
        if best_gi >= 0:
            taken.add(best_gi)
            pairs.append((pi, best_gi, best_d))
    pairs.sort()
    matched_p = {p for p, _, _ in pairs}
    return MatchResult(
        pairs=tuple(pairs),
        unmatched_preds=tuple(i for i in range(len(preds)) if i not in matched_p),
        unmatched_gts=tuple(i for i in range(len(gts)) if i not in taken),
    )


def average_precision(preds: list[Detection3D], gts: list[Detection3D],
                      dist_thresh_m: float = 2.0) -> float:
    """Area under the max-precision envelope of the PR curve."""
    if not gts:
        raise NoGroundTruth("average precision needs at least one ground truth")
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, i))
    taken: set[int] = set()
    tp_flags = []
    for pi in order:
        p = preds[pi]
        best_gi, best_d = -1, math.inf
        for gi, g in enumerate(gts):
            if gi in taken or g.kind != p.kind:
                continue
            d = math.hypot(p.x - g.x, p.y - g.y)
            if d <= dist_thresh_m and d < best_d:
                best_gi, best_d = gi, d
        if best_gi >= 0:
            taken.add(best_gi)
            tp_flags.append(True)
        else:
            tp_flags.append(False)

    n_gt = len(gts)
    precisions, recalls = [], []
    tp = 0
    for k, flag in enumerate(tp_flags, start=1):
        tp += int(flag)
        precisions.append(tp / k)
        recalls.append(tp / n_gt)
    ap = 0.0
    best_p = 0.0
    prev_r = None
    # walk backwards building the max-precision envelope
    deltas = []
    for p, r in zip(reversed(precisions), reversed(recalls)):
        best_p = max(best_p, p)
        deltas.append((r, best_p))
    deltas.reverse()
    prev_r = 0.0
    for r, p_env in deltas:
        ap += (r - prev_r) * p_env
        prev_r = r
    return ap


def detection_map(preds: list[Detection3D], gts: list[Detection3D],
                  dist_thresh_m: float = 2.0) -> float:
    """Mean AP over the classes present in the ground truth."""
    classes = sorted({g.kind for g in gts})
    if not classes:
        raise NoGroundTruth("no ground-truth objects at all")
    aps = []
    for cls in classes:
        aps.append(average_precision(
            [p for p in preds if p.kind == cls],
            [g for g in gts if g.kind == cls],
            dist_thresh_m,
        ))
    return sum(aps) / len(aps)


def _aligned_iou(a: Detection3D, b: Detection3D) -> float:
    inter = min(a.length, b.length) * min(a.width, b.width)
    union = a.length * a.width + b.length * b.width - inter
    return inter / union if union > 0 else 0.0


def tp_metrics(match: MatchResult, preds: list[Detection3D],
               gts: list[Detection3D]) -> dict[str, dict[str, float]]:
    """Per-class mean translation / surface / orientation / velocity errors
    over the matched pairs. Classes with no matches are omitted."""
    acc: dict[str, list[list[float]]] = {}
    for pi, gi, dist in match.pairs:
        p, g = preds[pi], gts[gi]
        rows = acc.setdefault(g.kind, [[], [], [], []])
        rows[0].append(dist)
        rows[1].append(1.0 - _aligned_iou(p, g))
        rows[2].append(abs(wrap_angle(p.yaw - g.yaw)))
        rows[3].append(abs((p.speed or 0.0) - (g.speed or 0.0)))
    return {
        cls: {name: sum(vals) / len(vals) for name, vals in zip(TP_METRIC_NAMES, rows)}
        for cls, rows in acc.items()
    }


# ---------------------------------------------------------------------------
# grids

def bev_miou(pred: BevGrid, gt: BevGrid, occ_thresh: float = 0.65) -> float:
    if pred.spec != gt.spec:
        raise SpecMismatch("grids must share a spec")
    p = pred.cells >= occ_thresh
    g = gt.cells >= occ_thresh
    union = int(np.count_nonzero(p | g))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(p & g)) / union


def motion_vpq(pred_frames: list[dict[int, np.ndarray]],
               gt_frames: list[dict[int, np.ndarray]]) -> float:
    """Per-tick panoptic quality of instance masks, averaged over ticks.

    Instances match at IoU > 0.5 (which makes matches unique); a tick with no
    instances on either side scores 1.
    """
    if len(pred_frames) != len(gt_frames):
        raise LengthMismatch("prediction and ground-truth tick ranges differ")
    if not pred_frames:
        return 1.0
    scores = []
    for preds, gts in zip(pred_frames, gt_frames):
        if not preds and not gts:
            scores.append(1.0)
            continue
        tp_iou = []
        matched_g = set()
        matched_p = set()
        for pid, pmask in preds.items():
            for gid, gmask in gts.items():
                if gid in matched_g:
                    continue
                inter = int(np.count_nonzero(pmask & gmask))
                union = int(np.count_nonzero(pmask | gmask))
                iou = inter / union if union else 0.0
                if iou > 0.5:
                    tp_iou.append(iou)
                    matched_g.add(gid)
                    matched_p.add(pid)
                    break
        fp = len(preds) - len(matched_p)
        fn = len(gts) - len(matched_g)
        denom = len(tp_iou) + 0.5 * fp + 0.5 * fn
        scores.append(sum(tp_iou) / denom if denom > 0 else 1.0)
    return sum(scores) / len(scores)


# ---------------------------------------------------------------------------
# classification

def classification_report(preds: list, gts: list) -> dict[str, float]:
    if len(preds) != len(gts):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(gts)} labels")
    if not gts:
        raise EmptyInput("no samples to score")
    labels = sorted(set(gts))
    correct = sum(1 for p, g in zip(preds, gts) if p == g)
    precisions, recalls, f1s = [], [], []
    for lbl in labels:
        tp = sum(1 for p, g in zip(preds, gts) if p == lbl and g == lbl)
        fp = sum(1 for p, g in zip(preds, gts) if p == lbl and g != lbl)
        fn = sum(1 for p, g in zip(preds, gts) if p != lbl and g == lbl)
        prec = tp / (tp + fp) if tp + fp > 0 else 0.0
        rec = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        precisions.append(prec)
        recalls.append(rec)
        f1s.append(f1)
    n = len(labels)
    return {
        "accuracy": correct / len(gts),
        "precision": sum(precisions) / n,
        "recall": sum(recalls) / n,
        "f1": sum(f1s) / n,
    }


# ---------------------------------------------------------------------------
# alert rating

@dataclass
class TickTruth:
    """What perception actually contained at one tick."""
    track_ids: set[int] = field(default_factory=set)
    collision_ttc: dict[tuple[int, int], float] = field(default_factory=dict)


def tick_truth_from_product(product) -> TickTruth:
    return TickTruth(
        track_ids={f.track_id for f in product.forecasts},
        collision_ttc={(c.track_a, c.track_b): c.ttc_s for c in product.collisions},
    )


@dataclass
class RatingHistogram:
    counts: dict[Mission, Counter] = field(default_factory=dict)

    def add(self, mission: Mission, bucket: str):
        if bucket not in RATING_BUCKETS:
            raise ValidationError(f"unknown bucket '{bucket}'")
        self.counts.setdefault(mission, Counter())[bucket] += 1

    def total(self) -> int:
        return sum(sum(c.values()) for c in self.counts.values())

    def table(self) -> dict[str, dict[str, float]]:
        """Mission rows (all eight, in canonical order) with bucket percentages."""
        out = {}
        for mission in MISSION_ORDER:
            c = self.counts.get(mission, Counter())
            n = sum(c.values())
            out[mission.value] = {
                b: (100.0 * c[b] / n if n else 0.0) for b in RATING_BUCKETS
            }
            out[mission.value]["count"] = n
        return out

    def merged(self, other: "RatingHistogram") -> "RatingHistogram":
        out = RatingHistogram()
        for src in (self, other):
            for mission, c in src.counts.items():
                for bucket, n in c.items():
                    out.counts.setdefault(mission, Counter())[bucket] += n
        return out


def _parse_ref(ref: str):
    if ref.startswith("track:"):
        try:
            return ("track", int(ref.split(":", 1)[1]))
        except ValueError:
            return ("track", None)
    if ref.startswith("collision:"):
        body = ref.split(":", 1)[1]
        parts = body.split("-")
        if len(parts) == 2:
            try:
                return ("collision", (int(parts[0]), int(parts[1])))
            except ValueError:
                pass
        return ("collision", None)
    return ("other", None)


def rate_alert(alert: SafetyAlert, truth_by_tick: dict[int, TickTruth]) -> str:
    """Reference rubric, frozen:

    Good   = grounded and timely and specific
    Middle = grounded and specific
    Normal = grounded only
    Bad    = ungrounded, no evidence, or carries the fallback marker
    """
    if alert.fallback or not alert.evidence:
        return "Bad"
    truth = truth_by_tick.get(alert.tick)
    if truth is None:
        return "Bad"
    specific = False
    timely = False
    for ref in alert.evidence:
        kind, val = _parse_ref(ref)
        if kind == "track":
            if val is None or val not in truth.track_ids:
                return "Bad"
            specific = True
        elif kind == "collision":
            if val is None or val not in truth.collision_ttc:
                return "Bad"
            if truth.collision_ttc[val] >= TIMELY_MARGIN_S:
                timely = True
        else:
            return "Bad"
    if timely and specific:
        return "Good"
    if specific:
        return "Middle"
    return "Normal"


def rate_alerts(alerts: list[SafetyAlert],
                truth_by_tick: dict[int, TickTruth]) -> RatingHistogram:
    hist = RatingHistogram()
    for alert in alerts:
        hist.add(alert.mission, rate_alert(alert, truth_by_tick))
    return hist


# ---------------------------------------------------------------------------
# report shapes

@dataclass
class MetricReport:
    detection_map: float
    per_class: dict[str, dict[str, float] | None]
    bev_miou: float
    motion_vpq: float

    def to_json(self) -> dict:
        return {
            "detection_map": self.detection_map,
            "per_class": self.per_class,
            "bev_miou": self.bev_miou,
            "motion_vpq": self.motion_vpq,
        }

    def to_text(self) -> str:
        lines = []
        lines.append(f"{'model':<24}{'Detection (%)':>15}{'mIOU (%)':>12}{'VPQ (%)':>12}")
        lines.append(
            f"{'fused-pipeline':<24}{100 * self.detection_map:>15.2f}"
            f"{100 * self.bev_miou:>12.2f}{100 * self.motion_vpq:>12.2f}"
        )
        lines.append("")
        header = f"{'class':<14}" + "".join(
            f"{h:>14}" for h in ("mATE (m)", "mASE (1-IoU)", "mAOE (rad)", "mAVE (m/s)")
        )
        lines.append(header)
        for cls in REPORT_CLASSES:
            row = self.per_class.get(cls)
            cells = "".join(
                f"{row[name]:>14.4f}" if row else f"{'n/a':>14}"
                for name in TP_METRIC_NAMES
            )
            lines.append(f"{cls.capitalize():<14}" + cells)
        return "\n".join(lines)


def full_per_class(metrics: dict[str, dict[str, float]]) -> dict[str, dict[str, float] | None]:
    """All four report classes, None where there were no matches."""
    return {cls: metrics.get(cls) for cls in REPORT_CLASSES}


def sweep_table_text(title: str, tables: dict[str, dict[str, dict[str, float]]]) -> str:
    """Aligned-column rendering of a sweep: one block per sweep setting."""
    lines = [title]
    for setting, rows in tables.items():
        lines.append("")
        lines.append(f"== {setting} ==")
        lines.append(
            f"{'mission':<26}{'number':>7}" + "".join(f"{b + ' (%)':>13}" for b in RATING_BUCKETS)
        )
        for idx, mission in enumerate(MISSION_ORDER, start=1):
            row = rows[mission.value]
            cells = "".join(f"{row[b]:>13.2f}" for b in RATING_BUCKETS)
            lines.append(f"{mission.label:<26}{idx:>7}" + cells)
    return "\n".join(lines)
