"""Independent reference implementations the test suite checks against.

Everything in here is deliberately written the slow, obvious way (scalar
loops, exhaustive scans) and stays independent of the code paths it is used
to verify.
"""

from __future__ import annotations

import math

import numpy as np


def numeric_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function at x, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    denom = np.maximum(np.abs(a) + np.abs(n), 1.0)
    return float(np.max(np.abs(a - n) / denom))


def adam_scalar_steps(param0, grads, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """Pure-Python scalar-loop Adam; returns parameter values after each step."""
    p = list(np.asarray(param0, dtype=np.float64).reshape(-1))
    m = [0.0] * len(p)
    v = [0.0] * len(p)
    history = []
    for t, g_arr in enumerate(grads, start=1):
        g = list(np.asarray(g_arr, dtype=np.float64).reshape(-1))
        bc1 = 1.0 - beta1 ** t
        bc2 = 1.0 - beta2 ** t
        for i in range(len(p)):
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
            v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i])
            p[i] = p[i] - lr * (m[i] / bc1) / (math.sqrt(v[i] / bc2) + eps)
        history.append(np.array(p, dtype=np.float64))
    return history


# ---------------------------------------------------------------------------
# clustering


def cosine_distance_scalar(a, b) -> float:
    num = 0.0
    na = 0.0
    nb = 0.0
    for x, y in zip(a, b):
        num += float(x) * float(y)
        na += float(x) * float(x)
        nb += float(y) * float(y)
    return 1.0 - num / (math.sqrt(na) * math.sqrt(nb))


def average_linkage_scalar(cluster_a, cluster_b) -> float:
    total = 0.0
    for a in cluster_a:
        for b in cluster_b:
            total += cosine_distance_scalar(a, b)
    return total / (len(cluster_a) * len(cluster_b))


def reference_agglomerate(vectors, k: int, sum_normalizer: bool = False):
    """O(n^3) bottom-up clustering, recomputing every linkage from scratch.

    Merges the (p, q) pair, p < q, with the smallest linkage; ties resolve
    to the smallest p then smallest q. The merged cluster replaces slot p
    and slot q is removed. Returns member-index lists in slot order.
    """
    clusters = [[i] for i in range(len(vectors))]
    while len(clusters) > k:
        best = None
        for p in range(len(clusters)):
            for q in range(p + 1, len(clusters)):
                va = [vectors[i] for i in clusters[p]]
                vb = [vectors[i] for i in clusters[q]]
                total = 0.0
                for a in va:
                    for b in vb:
                        total += cosine_distance_scalar(a, b)
                if sum_normalizer:
                    link = total / (len(va) + len(vb))
                else:
                    link = total / (len(va) * len(vb))
                if best is None or link < best[0] - 1e-15 or (
                        abs(link - best[0]) <= 1e-15 and (p, q) < best[1:]):
                    best = (link, p, q)
        _, p, q = best
        clusters[p] = clusters[p] + clusters[q]
        del clusters[q]
    return clusters


# ---------------------------------------------------------------------------
# detection postprocessing


def iou_xywh(a, b) -> float:
    ax1, ay1 = a[0] - a[2] / 2.0, a[1] - a[3] / 2.0
    ax2, ay2 = a[0] + a[2] / 2.0, a[1] + a[3] / 2.0
    bx1, by1 = b[0] - b[2] / 2.0, b[1] - b[3] / 2.0
    bx2, by2 = b[0] + b[2] / 2.0, b[1] + b[3] / 2.0
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a[2] * a[3] + b[2] * b[3] - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def brute_force_nms(detections, iou_thresh: float):
    """All-pairs suppression oracle; detections are (box, class_id, conf, idx)."""
    survivors = []
    for class_id in sorted({d[1] for d in detections}):
        group = [d for d in detections if d[1] == class_id]
        group.sort(key=lambda d: (-d[2], d[3]))
        kept = []
        for cand in group:
            suppressed = False
            for k in kept:
                if iou_xywh(cand[0], k[0]) > iou_thresh:
                    suppressed = True
                    break
            if not suppressed:
                kept.append(cand)
        survivors.extend(kept)
    return sorted(survivors, key=lambda d: d[3])


def yolo_loss_transcription(decoded, targets, lambda_coord, lambda_noobj):
    """Literal five-term sum-of-squares detection loss over one scale.

    ``decoded``: dict with x, y, w, h, conf (S, S, B) and prob (S, S, B, N).
    ``targets``: dict with obj_mask, noobj_mask (S, S, B), tx, ty, tw, th,
    tconf (S, S, B) and tprob (S, S, B, N). Pure scalar loops.
    """
    S = decoded["x"].shape[0]
    B = decoded["x"].shape[2]
    N = decoded["prob"].shape[3]
    term1 = term2 = term3 = term4 = term5 = 0.0
    for i in range(S):
        for j in range(S):
            for b in range(B):
                if targets["obj_mask"][i, j, b]:
                    term1 += (decoded["x"][i, j, b] - targets["tx"][i, j, b]) ** 2
                    term1 += (decoded["y"][i, j, b] - targets["ty"][i, j, b]) ** 2
                    sw = math.sqrt(max(decoded["w"][i, j, b], 1e-12))
                    sh = math.sqrt(max(decoded["h"][i, j, b], 1e-12))
                    term2 += (sw - math.sqrt(targets["tw"][i, j, b])) ** 2
                    term2 += (sh - math.sqrt(targets["th"][i, j, b])) ** 2
                    term3 += (decoded["conf"][i, j, b] - targets["tconf"][i, j, b]) ** 2
                    for c in range(N):
                        term5 += (decoded["prob"][i, j, b, c]
                                  - targets["tprob"][i, j, b, c]) ** 2
                if targets["noobj_mask"][i, j, b]:
                    term4 += (decoded["conf"][i, j, b] - targets["tconf"][i, j, b]) ** 2
    return (lambda_coord * term1 + lambda_coord * term2 + term3
            + lambda_noobj * term4 + term5)


# ---------------------------------------------------------------------------
# COCO-style evaluation


def reference_greedy_match(dets, gts, iou_thresh):
    """Greedy matcher oracle. dets: (box, conf, idx) sorted outside; gts: boxes.

    Returns a TP/FP flag per detection in the given order.
    """
    matched = [False] * len(gts)
    flags = []
    for box, _conf, _idx in dets:
        best_iou = 0.0
        best_g = -1
        for gi, gt in enumerate(gts):
            if matched[gi]:
                continue
            v = iou_xywh(box, gt)
            if v > best_iou:
                best_iou = v
                best_g = gi
        if best_g >= 0 and best_iou >= iou_thresh:
            matched[best_g] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def reference_average_precision(scored_flags, num_gt) -> float:
    """101-point interpolated AP from (confidence, is_tp) pairs."""
    if num_gt == 0:
        return float("nan")
    order = sorted(range(len(scored_flags)),
                   key=lambda i: (-scored_flags[i][0], i))
    tps = 0
    fps = 0
    precisions = []
    recalls = []
    for i in order:
        if scored_flags[i][1]:
            tps += 1
        else:
            fps += 1
        precisions.append(tps / (tps + fps))
        recalls.append(tps / num_gt)
    # precision envelope, monotone non-increasing from the right
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    ap = 0.0
    for r in [i / 100.0 for i in range(101)]:
        p = 0.0
        for rec, prec in zip(recalls, precisions):
            if rec >= r - 1e-12:
                p = prec
                break
        ap += p
    return ap / 101.0


def reference_coco_summary(images, iou_thresholds, class_ids, max_dets=100,
                           conf_floor=0.001, area_range=None):
    """Second-implementation COCO-style mean AP/AR over a tiny image list.

    ``images``: list of dicts {"dets": [(class_id, conf, box)],
    "gts": [(class_id, box)]}; boxes are (cx, cy, w, h) in pixels.
    Returns (mean_ap, mean_ar) averaged over IoU thresholds and classes
    with at least one ground truth.
    """
    def area_of(box):
        return box[2] * box[3]

    def in_range(box):
        if area_range is None:
            return True
        lo, hi = area_range
        return lo <= area_of(box) < hi

    per_class_ap = {}
    per_class_ar = {}
    for class_id in class_ids:
        gt_total = 0
        for img in images:
            gt_total += sum(1 for c, b in img["gts"] if c == class_id and in_range(b))
        if gt_total == 0:
            continue
        aps = []
        ars = []
        for thresh in iou_thresholds:
            scored = []
            tp_count = 0
            for img in images:
                dets = [(b, conf, i) for i, (c, conf, b) in enumerate(img["dets"])
                        if c == class_id and conf >= conf_floor and in_range(b)]
                dets.sort(key=lambda d: (-d[1], d[2]))
                dets = dets[:max_dets]
                gts = [b for c, b in img["gts"] if c == class_id and in_range(b)]
                flags = reference_greedy_match(dets, gts, thresh)
                for (b, conf, _i), f in zip(dets, flags):
                    scored.append((conf, f))
                tp_count += sum(flags)
            aps.append(reference_average_precision(scored, gt_total))
            ars.append(tp_count / gt_total)
        per_class_ap[class_id] = sum(aps) / len(aps)
        per_class_ar[class_id] = sum(ars) / len(ars)
    if not per_class_ap:
        return float("nan"), float("nan")
    mean_ap = sum(per_class_ap.values()) / len(per_class_ap)
    mean_ar = sum(per_class_ar.values()) / len(per_class_ar)
    return mean_ap, mean_ar
