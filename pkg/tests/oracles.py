"""Brute-force reference implementations used to cross-check the metrics.

Everything here is written loop-by-loop from the definitions, independent of
the vectorized/greedy code paths in sentinel.metrics.
"""

import math
from fractions import Fraction


def greedy_match_oracle(preds, gts, thresh):
    """(pred_idx, gt_idx) pairs: confidence-descending greedy, nearest free
    same-class ground truth."""
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, i))
    free = set(range(len(gts)))
    pairs = []
    for pi in order:
        best = None
        for gi in sorted(free):
            if gts[gi].kind != preds[pi].kind:
                continue
            d = math.hypot(preds[pi].x - gts[gi].x, preds[pi].y - gts[gi].y)
            if d <= thresh and (best is None or d < best[0]):
                best = (d, gi)
        if best is not None:
            free.discard(best[1])
            pairs.append((pi, best[1], best[0]))
    return sorted(pairs)


def ap_oracle(preds, gts, thresh):
    """Average precision via exact rational arithmetic over the PR points."""
    pairs = greedy_match_oracle(preds, gts, thresh)
    matched_preds = {p for p, _, _ in pairs}
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, i))
    n_gt = len(gts)
    points = []
    tp = 0
    for rank, pi in enumerate(order, start=1):
        if pi in matched_preds:
            tp += 1
        points.append((Fraction(tp, n_gt), Fraction(tp, rank)))
    ap = Fraction(0)
    prev_recall = Fraction(0)
    for k, (recall, _) in enumerate(points):
        if recall == prev_recall:
            continue
        envelope = max(p for r, p in points[k:])
        ap += (recall - prev_recall) * envelope
        prev_recall = recall
    return float(ap)


def tp_metrics_oracle(preds, gts, thresh):
    """Per-class error means over the greedy matches."""
    pairs = greedy_match_oracle(preds, gts, thresh)
    per_class = {}
    for pi, gi, dist in pairs:
        p, g = preds[pi], gts[gi]
        inter = min(p.length, g.length) * min(p.width, g.width)
        union = p.length * p.width + g.length * g.width - inter
        dyaw = abs(p.yaw - g.yaw) % (2 * math.pi)
        if dyaw > math.pi:
            dyaw = 2 * math.pi - dyaw
        rows = per_class.setdefault(g.kind, [])
        rows.append((
            dist,
            1.0 - inter / union,
            dyaw,
            abs((p.speed or 0.0) - (g.speed or 0.0)),
        ))
    out = {}
    for cls, rows in per_class.items():
        n = len(rows)
        out[cls] = {
            "mATE": sum(r[0] for r in rows) / n,
            "mASE": sum(r[1] for r in rows) / n,
            "mAOE": sum(r[2] for r in rows) / n,
            "mAVE": sum(r[3] for r in rows) / n,
        }
    return out


def miou_oracle(pred_cells, gt_cells, thresh):
    inter = union = 0
    rows = len(pred_cells)
    for r in range(rows):
        for c in range(len(pred_cells[0])):
            p = pred_cells[r][c] >= thresh
            g = gt_cells[r][c] >= thresh
            inter += p and g
            union += p or g
    return inter / union if union else 1.0


def vpq_oracle(pred_frames, gt_frames):
    scores = []
    for preds, gts in zip(pred_frames, gt_frames):
        if not preds and not gts:
            scores.append(1.0)
            continue
        used = set()
        tp_iou = []
        for pid in sorted(preds):
            for gid in sorted(gts):
                if gid in used:
                    continue
                pm, gm = preds[pid], gts[gid]
                inter = sum(
                    1
                    for r in range(len(pm))
                    for c in range(len(pm[0]))
                    if pm[r][c] and gm[r][c]
                )
                union = sum(
                    1
                    for r in range(len(pm))
                    for c in range(len(pm[0]))
                    if pm[r][c] or gm[r][c]
                )
                iou = inter / union if union else 0.0
                if iou > 0.5:
                    used.add(gid)
                    tp_iou.append(iou)
                    break
        fp = len(preds) - len(tp_iou)
        fn = len(gts) - len(used)
        denom = len(tp_iou) + 0.5 * fp + 0.5 * fn
        scores.append(sum(tp_iou) / denom if denom else 1.0)
    return sum(scores) / len(scores) if scores else 1.0


def classification_oracle(preds, gts):
    labels = sorted(set(gts))
    matrix = {(a, b): 0 for a in labels for b in labels + ["<other>"]}
    for p, g in zip(preds, gts):
        key = p if p in labels else "<other>"
        matrix[(g, key)] = matrix.get((g, key), 0) + 1
    accuracy = sum(matrix.get((l, l), 0) for l in labels) / len(gts)
    precs, recs, f1s = [], [], []
    for lbl in labels:
        tp = matrix.get((lbl, lbl), 0)
        pred_pos = sum(1 for p in preds if p == lbl)
        actual = sum(1 for g in gts if g == lbl)
        prec = tp / pred_pos if pred_pos else 0.0
        rec = tp / actual if actual else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        precs.append(prec)
        recs.append(rec)
        f1s.append(f1)
    n = len(labels)
    return {
        "accuracy": accuracy,
        "precision": sum(precs) / n,
        "recall": sum(recs) / n,
        "f1": sum(f1s) / n,
    }


def corpus_rank_oracle(boxes, job_tags, now_tick, k):
    """Score every box explicitly and sort."""
    scored = []
    for b in boxes:
        sa, sb = set(b.relevance_tags), set(job_tags)
        jacc = len(sa & sb) / len(sa | sb) if (sa or sb) else 0.0
        recency = 2.0 ** (-(max(0, now_tick - b.created_tick)) / 500.0)
        outcome = {"success": 1.0, "neutral": 0.5, "failure": 0.8}[b.outcome]
        scored.append((0.5 * jacc + 0.3 * recency + 0.2 * outcome, b))
    scored.sort(key=lambda s: (-s[0], -s[1].created_tick, s[1].box_id))
    return [b for _, b in scored[:k]]
