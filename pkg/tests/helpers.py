"""Independent reference implementations used as test oracles.

Everything here is deliberately written against the protocol definitions,
not against the package internals: dense pixel arithmetic instead of run
lists, direct max-over-recall interpolation instead of envelope+search,
and exhaustive chain enumeration instead of dynamic programming.
"""

import itertools

import numpy as np

from vistrack.io import Detection, FrameDetections
from vistrack.mask import Box, RleMask, rle_encode

IOU_THRESHOLDS = (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)


def mask_from_pixels(height, width, pixels) -> RleMask:
    """Build an RleMask from (row, col) foreground coordinates."""
    grid = np.zeros((height, width), dtype=bool)
    for r, c in pixels:
        grid[r, c] = True
    return rle_encode(grid)


def dense_mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    inter = np.logical_and(a, b).sum()
    union = np.logical_or(a, b).sum()
    return float(inter) / float(union) if union else 0.0


def dense_st_iou(masks_a: dict, masks_b: dict, shape) -> float:
    """Spatio-temporal IoU by brute-force pixel counting over all frames."""
    inter = 0
    union = 0
    for t in set(masks_a) | set(masks_b):
        a = masks_a.get(t)
        b = masks_b.get(t)
        a = a if a is not None else np.zeros(shape, dtype=bool)
        b = b if b is not None else np.zeros(shape, dtype=bool)
        inter += int(np.logical_and(a, b).sum())
        union += int(np.logical_or(a, b).sum())
    return inter / union if union else 0.0


def random_rle(rng, max_side=64):
    h = int(rng.integers(1, max_side + 1))
    w = int(rng.integers(1, max_side + 1))
    density = rng.uniform(0.0, 1.0)
    grid = rng.random((h, w)) < density
    return grid, rle_encode(grid)


# ---------------------------------------------------------------------------
# Reference single-image instance-segmentation AP (for length-1 videos).
# Instances are plain dicts: {"image", "category", "mask" (dense bool),
# "score" (hypotheses only)}.
# ---------------------------------------------------------------------------


def _ref_match(gts, hyps, threshold):
    """Greedy confidence-ordered matching; returns set of matched hyp indices."""
    order = sorted(range(len(hyps)), key=lambda i: (-hyps[i]["score"], i))
    taken = set()
    matched = set()
    for i in order:
        h = hyps[i]
        best_j = None
        best_iou = None
        for j, g in enumerate(gts):
            if j in taken or g["image"] != h["image"]:
                continue
            iou = dense_mask_iou(g["mask"], h["mask"])
            if iou < threshold:
                continue
            if best_iou is None or iou > best_iou or (iou == best_iou and g["id"] < gts[best_j]["id"]):
                best_j = j
                best_iou = iou
        if best_j is not None:
            taken.add(best_j)
            matched.add(i)
    return matched


def _ref_ap(gts, hyps, threshold) -> float:
    """101-point AP by direct max-precision-at-recall lookup."""
    if not hyps:
        return 0.0
    matched = _ref_match(gts, hyps, threshold)
    order = sorted(range(len(hyps)), key=lambda i: (-hyps[i]["score"], i))
    tp = 0
    points = []  # (recall, precision) after each rank
    for rank, i in enumerate(order, start=1):
        if i in matched:
            tp += 1
        points.append((tp / len(gts), tp / rank))
    ap = 0.0
    for r in np.linspace(0.0, 1.0, 101):
        best = 0.0
        for rc, pr in points:
            if rc >= r and pr > best:
                best = pr
        ap += best
    return ap / 101.0


def reference_image_eval(gts, hyps, ar_limits=(1, 10), max_dets=100):
    """Per-category AP/AR for single-image instances, COCO conventions.

    Returns a dict shaped like EvalReport.to_dict()'s top-level numbers.
    """
    categories = sorted({g["category"] for g in gts})

    def cap(items, limit, keyfn):
        kept = []
        counts = {}
        for i in sorted(range(len(items)), key=lambda i: (-items[i]["score"], i)):
            k = keyfn(items[i])
            if counts.get(k, 0) < limit:
                counts[k] = counts.get(k, 0) + 1
                kept.append(i)
        return [items[i] for i in sorted(kept)]

    capped = cap(hyps, max_dets, lambda h: (h["image"], h["category"]))
    per_category = {}
    for cid in categories:
        gts_c = [g for g in gts if g["category"] == cid]
        hyps_c = [h for h in capped if h["category"] == cid]
        per_category[cid] = [_ref_ap(gts_c, hyps_c, t) for t in IOU_THRESHOLDS]

    ar = {}
    for k in ar_limits:
        top = cap(hyps, k, lambda h: h["image"])
        recalls = []
        for cid in categories:
            gts_c = [g for g in gts if g["category"] == cid]
            hyps_c = [h for h in top if h["category"] == cid]
            vals = [len(_ref_match(gts_c, hyps_c, t)) / len(gts_c) for t in IOU_THRESHOLDS]
            recalls.append(float(np.mean(vals)))
        ar[k] = float(np.mean(recalls)) if recalls else 0.0

    mean_ap = float(np.mean([np.mean(v) for v in per_category.values()])) if per_category else 0.0
    at = {t: float(np.mean([v[i] for v in per_category.values()])) if per_category else 0.0
          for i, t in enumerate(IOU_THRESHOLDS)}
    return {
        "mean_ap": mean_ap,
        "ap50": at[0.5],
        "ap75": at[0.75],
        "ar": ar,
        "per_category": {c: [float(x) for x in v] for c, v in per_category.items()},
    }


# ---------------------------------------------------------------------------
# Exhaustive chain enumeration (SeqTracker oracle).
# ---------------------------------------------------------------------------


def _chain_key(dets_by_frame, members, weights):
    score = 0.0
    for idx, (t, k) in enumerate(members):
        det = dets_by_frame[t][k]
        score += weights.alpha * np.log(det.score)
        if idx > 0:
            pt, pk = members[idx - 1]
            prev = dets_by_frame[pt][pk]
            iw = max(0.0, min(prev.box.x + prev.box.w, det.box.x + det.box.w) - max(prev.box.x, det.box.x))
            ih = max(0.0, min(prev.box.y + prev.box.h, det.box.y + det.box.h) - max(prev.box.y, det.box.y))
            inter = iw * ih
            union = prev.box.w * prev.box.h + det.box.w * det.box.h - inter
            iou = inter / union if prev.box.area > 0 and det.box.area > 0 and union > 0 else 0.0
            score += weights.beta * iou
            if prev.category_id == det.category_id:
                score += weights.gamma
    return score


def enumerate_best_chain(dets_by_frame, weights):
    """All frame-consecutive chains, best by (score, length, smallest members)."""
    frames = sorted(dets_by_frame)
    if not frames:
        return None
    lo, hi = frames[0], frames[-1]
    best = None
    for start in range(lo, hi + 1):
        for end in range(start, hi + 1):
            span = range(start, end + 1)
            if any(len(dets_by_frame.get(t, [])) == 0 for t in span):
                continue
            for combo in itertools.product(*(range(len(dets_by_frame[t])) for t in span)):
                members = tuple(zip(span, combo))
                score = _chain_key(dets_by_frame, members, weights)
                cand = (score, members)
                if best is None:
                    best = cand
                    continue
                if cand[0] != best[0]:
                    if cand[0] > best[0]:
                        best = cand
                elif len(cand[1]) != len(best[1]):
                    if len(cand[1]) > len(best[1]):
                        best = cand
                elif cand[1] < best[1]:
                    best = cand
    return best


# ---------------------------------------------------------------------------
# Small fixture builders.
# ---------------------------------------------------------------------------


def rect_mask(height, width, x, y, w, h) -> RleMask:
    grid = np.zeros((height, width), dtype=bool)
    grid[y : y + h, x : x + w] = True
    return rle_encode(grid)


def make_detection(x, y, w, h, category=1, score=0.9, feature=None, frame_size=(64, 96)):
    mask = rect_mask(frame_size[0], frame_size[1], x, y, w, h)
    return Detection(
        box=Box(float(x), float(y), float(w), float(h)),
        mask=mask,
        category_id=category,
        score=score,
        feature=None if feature is None else np.asarray(feature, dtype=np.float64),
    )


def make_frame(video_id, frame_index, detections):
    return FrameDetections(video_id=video_id, frame_index=frame_index, detections=list(detections))
