"""Spatio-temporal IoU and the video AP/AR evaluation protocol.

Two instance tracks are compared by accumulating per-frame mask
intersections and unions over the whole video, with absent frames treated
as empty masks. AP follows the COCO convention: greedy confidence-ordered
matching per video, 101-point interpolated precision averaged over 10 IoU
thresholds, categories without ground truth excluded from means. AR@k is
the recall when only the top-k confidence hypotheses per video (pooled
across categories) are kept, averaged over thresholds and categories.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EvaluationError
from .mask import rle_intersection_area

DEFAULT_IOU_THRESHOLDS = (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)
RECALL_POINTS = np.linspace(0.0, 1.0, 101)


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: tuple = DEFAULT_IOU_THRESHOLDS
    ar_limits: tuple = (1, 10)
    max_dets_per_video_category: int = 100

    def __post_init__(self):
        ts = tuple(float(t) for t in self.iou_thresholds)
        object.__setattr__(self, "iou_thresholds", ts)
        if not ts or any(t <= 0 or t > 1 for t in ts):
            raise ValueError("iou thresholds must lie in (0, 1]")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("iou thresholds must be strictly increasing")
        limits = tuple(int(k) for k in self.ar_limits)
        object.__setattr__(self, "ar_limits", limits)
        if any(k <= 0 for k in limits):
            raise ValueError("ar limits must be positive")
        if self.max_dets_per_video_category <= 0:
            raise ValueError("max_dets_per_video_category must be positive")


@dataclass
class EvalReport:
    """AP/AR at all thresholds, per category and averaged."""

    thresholds: tuple
    per_category_ap: dict  # category_id -> [AP at each threshold]
    gt_counts: dict  # category_id -> number of GT instances
    mean_ap: float
    ap50: float
    ap75: float
    ar: dict  # limit k -> AR@k

    def to_dict(self) -> dict:
        per_cat = {
            str(cid): {
                "ap_per_threshold": [float(v) for v in aps],
                "ap": float(np.mean(aps)),
                "num_gt": self.gt_counts[cid],
            }
            for cid, aps in sorted(self.per_category_ap.items())
        }
        return {
            "thresholds": [float(t) for t in self.thresholds],
            "mean_ap": float(self.mean_ap),
            "ap50": float(self.ap50),
            "ap75": float(self.ap75),
            "ar": {str(k): float(v) for k, v in sorted(self.ar.items())},
            "per_category": per_cat,
        }

    def format_table(self) -> str:
        """Aligned text table: AP, AP50, AP75, AR1, AR10."""
        header = ["", "AP", "AP50", "AP75"] + [f"AR{k}" for k in sorted(self.ar)]
        rows = [
            ["overall", f"{self.mean_ap:.4f}", f"{self.ap50:.4f}", f"{self.ap75:.4f}"]
            + [f"{self.ar[k]:.4f}" for k in sorted(self.ar)]
        ]
        for cid in sorted(self.per_category_ap):
            aps = self.per_category_ap[cid]
            rows.append([f"category {cid}", f"{float(np.mean(aps)):.4f}", "", ""] + ["" for _ in self.ar])
        widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
        lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
        for r in rows:
            lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
        return "\n".join(lines)


def st_iou(gt, hyp) -> float:
    """Spatio-temporal IoU of two tracks: frame-summed intersection over union.

    Frames where a track has no mask contribute an empty mask; the value is
    0 when the accumulated union is 0.
    """
    if gt.video_id != hyp.video_id:
        raise EvaluationError(
            f"tracks belong to different videos: {gt.video_id} vs {hyp.video_id}"
        )
    inter = 0
    union = 0
    for t in set(gt.masks) | set(hyp.masks):
        ma = gt.masks.get(t)
        mb = hyp.masks.get(t)
        if ma is None:
            union += mb.area()
        elif mb is None:
            union += ma.area()
        else:
            i = rle_intersection_area(ma, mb)
            inter += i
            union += ma.area() + mb.area() - i
    if union == 0:
        return 0.0
    return inter / union


def _confidence_order(tracks):
    """Indices in descending confidence; ties keep input order."""
    return sorted(range(len(tracks)), key=lambda i: (-tracks[i].confidence, i))


def _greedy_match(gt_tracks, hyp_order, ious, threshold):
    """Greedy confidence-ordered matching within one category.

    ``ious`` maps hypothesis index -> {gt index: st_iou}. Each hypothesis
    takes the unmatched same-video GT of highest st_iou >= threshold; IoU
    ties prefer the smaller GT instance id. Returns hyp index -> gt index.
    """
    matched_gt = set()
    assignment = {}
    for i in hyp_order:
        best_j = None
        best_iou = threshold
        for j, v in ious[i].items():
            if j in matched_gt or v < best_iou:
                continue
            if v > best_iou or best_j is None or (
                gt_tracks[j].instance_id < gt_tracks[best_j].instance_id
            ):
                best_j = j
                best_iou = v
        if best_j is not None:
            matched_gt.add(best_j)
            assignment[i] = best_j
    return assignment


def match_category(gt_tracks, hyp_tracks, threshold):
    """Match hypotheses of one category to ground truth at one threshold.

    Returns a list parallel to ``hyp_tracks`` holding the matched GT index
    or None.
    """
    ious = {
        i: {
            j: st_iou(g, h)
            for j, g in enumerate(gt_tracks)
            if g.video_id == h.video_id
        }
        for i, h in enumerate(hyp_tracks)
    }
    order = _confidence_order(hyp_tracks)
    assignment = _greedy_match(gt_tracks, order, ious, threshold)
    return [assignment.get(i) for i in range(len(hyp_tracks))]


def _ap_from_flags(tp_flags, n_gt) -> float:
    """101-point interpolated average precision from ranked TP flags."""
    if len(tp_flags) == 0:
        return 0.0
    tp = np.cumsum(tp_flags, dtype=np.float64)
    ranks = np.arange(1, len(tp_flags) + 1, dtype=np.float64)
    rc = tp / n_gt
    pr = tp / ranks
    # precision envelope: monotone non-increasing from the right
    for i in range(len(pr) - 1, 0, -1):
        if pr[i] > pr[i - 1]:
            pr[i - 1] = pr[i]
    inds = np.searchsorted(rc, RECALL_POINTS, side="left")
    q = np.zeros(len(RECALL_POINTS))
    valid = inds < len(pr)
    q[valid] = pr[inds[valid]]
    return float(q.mean())


def _cap_per_video(hypotheses, limit, key):
    """Keep the top-``limit`` hypotheses per group by confidence (stable)."""
    kept = []
    counts = {}
    for i in _confidence_order(hypotheses):
        k = key(hypotheses[i])
        if counts.get(k, 0) < limit:
            counts[k] = counts.get(k, 0) + 1
            kept.append(i)
    return [hypotheses[i] for i in sorted(kept)]


def evaluate(gt, hypotheses, config: EvalConfig | None = None) -> EvalReport:
    """Evaluate hypothesis tracks against a GroundTruth bundle."""
    if config is None:
        config = EvalConfig()
    for h in hypotheses:
        if h.video_id not in gt.videos:
            raise EvaluationError(f"hypothesis references unknown video {h.video_id}")
        if h.category_id not in gt.categories:
            raise EvaluationError(f"hypothesis references unknown category {h.category_id}")
        if h.confidence is None:
            raise EvaluationError("hypothesis lacks a confidence score")

    gt_counts = {}
    for track in gt.tracks:
        gt_counts[track.category_id] = gt_counts.get(track.category_id, 0) + 1
    categories = sorted(gt_counts)
    thresholds = config.iou_thresholds

    def iou_cache(gts_c, hyps_c):
        return {
            i: {
                j: st_iou(g, h)
                for j, g in enumerate(gts_c)
                if g.video_id == h.video_id
            }
            for i, h in enumerate(hyps_c)
        }

    capped = _cap_per_video(
        hypotheses,
        config.max_dets_per_video_category,
        key=lambda h: (h.video_id, h.category_id),
    )

    per_category_ap = {}
    for cid in categories:
        gts_c = [t for t in gt.tracks if t.category_id == cid]
        hyps_c = [h for h in capped if h.category_id == cid]
        ious = iou_cache(gts_c, hyps_c)
        order = _confidence_order(hyps_c)
        aps = []
        for tau in thresholds:
            assignment = _greedy_match(gts_c, order, ious, tau)
            flags = np.array([i in assignment for i in order], dtype=bool)
            aps.append(_ap_from_flags(flags, len(gts_c)))
        per_category_ap[cid] = aps

    ar = {}
    for limit in config.ar_limits:
        top_k = _cap_per_video(hypotheses, limit, key=lambda h: h.video_id)
        recalls = []
        for cid in categories:
            gts_c = [t for t in gt.tracks if t.category_id == cid]
            hyps_c = [h for h in top_k if h.category_id == cid]
            ious = iou_cache(gts_c, hyps_c)
            order = _confidence_order(hyps_c)
            cat_recalls = []
            for tau in thresholds:
                assignment = _greedy_match(gts_c, order, ious, tau)
                cat_recalls.append(len(assignment) / len(gts_c))
            recalls.append(float(np.mean(cat_recalls)))
        ar[limit] = float(np.mean(recalls)) if recalls else 0.0

    if per_category_ap:
        mean_ap = float(np.mean([np.mean(aps) for aps in per_category_ap.values()]))
    else:
        mean_ap = 0.0

    def mean_at(tau):
        if not per_category_ap:
            return 0.0
        idx = [i for i, t in enumerate(thresholds) if abs(t - tau) < 1e-9]
        if not idx:
            return float("nan")
        return float(np.mean([aps[idx[0]] for aps in per_category_ap.values()]))

    return EvalReport(
        thresholds=thresholds,
        per_category_ap=per_category_ap,
        gt_counts=gt_counts,
        mean_ap=mean_ap,
        ap50=mean_at(0.5),
        ap75=mean_at(0.75),
        ar=ar,
    )
