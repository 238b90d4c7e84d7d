"""Self-contained tracking baselines: IoUTracker+ and SeqTracker.

IoUTracker+ runs the same online pipeline as the association engine but
drops the appearance term and gates assignments on a minimum box overlap
with the remembered instance. SeqTracker is offline: it repeatedly
extracts the highest-scoring frame-consecutive chain of detections by
dynamic programming, removes its detections, and stops once the best
remaining chain is shorter than the length threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assoc import (
    CueWeights,
    TrackerConfig,
    TrackerState,
    _apply_assignments,
    _nms_keep,
    _resolve_assignments,
    finalize,
    majority_category,
)
from .io import InstanceTrack
from .mask import box_iou

DEFAULT_MIN_IOU = 0.30


@dataclass(frozen=True)
class SeqConfig:
    min_track_length: int = 8
    weights: CueWeights = CueWeights()

    def __post_init__(self):
        if self.min_track_length < 1:
            raise ValueError("min_track_length must be >= 1")


def iou_tracker_plus(frames, weights: CueWeights | None = None, min_iou=DEFAULT_MIN_IOU,
                     config: TrackerConfig | None = None):
    """Online tracker scoring by confidence, box IoU, and category only.

    A detection may take an existing label only when its box IoU with that
    instance's last box is at least ``min_iou``; otherwise it opens a new
    instance. Features are not used and may be absent.
    """
    if weights is None:
        weights = config.weights if config is not None else CueWeights()
    cfg = config if config is not None else TrackerConfig(weights=weights)
    frames = sorted(frames, key=lambda f: f.frame_index)
    if not frames:
        return []
    video_ids = {f.video_id for f in frames}
    if len(video_ids) > 1:
        raise ValueError(f"frames span multiple videos: {sorted(video_ids)}")
    state = TrackerState(video_id=frames[0].video_id, config=cfg)
    for frame in frames:
        keep = _nms_keep(frame.detections, cfg.nms_iou, cfg.score_floor, cfg.nms_on_masks)
        order = sorted(keep, key=lambda i: (-frame.detections[i].score, i))
        candidates = {}
        new_scores = {}
        for i in order:
            det = frame.detections[i]
            log_s = math.log(det.score)
            scores = {}
            for e in state.memory:
                overlap = box_iou(det.box, e.last_box)
                if overlap < min_iou:
                    continue
                scores[e.label] = (
                    weights.alpha * log_s
                    + weights.beta * overlap
                    + weights.gamma * (1.0 if det.category_id == e.category_id else 0.0)
                )
            candidates[i] = scores
            new_scores[i] = weights.alpha * log_s
        picks = _resolve_assignments(order, candidates, new_scores, compare_new=False)
        _apply_assignments(state, frame, order, picks)
    return finalize(state)


def _chain_better(a, b):
    """Total order over chains: score, then length, then earliest indices.

    A chain is (score, members) with members a tuple of (frame, det index)
    pairs. Higher score wins; ties prefer the longer chain, then the
    lexicographically smallest member tuple (earlier start, lower indices).
    """
    if a[0] != b[0]:
        return a[0] > b[0]
    if len(a[1]) != len(b[1]):
        return len(a[1]) > len(b[1])
    return a[1] < b[1]


def best_chain(dets_by_frame, weights: CueWeights):
    """Maximum-score frame-consecutive detection chain, by forward DP.

    A chain picks at most one detection per frame from a contiguous frame
    range. Its score sums ``alpha * log(score)`` per member plus
    ``beta * IoU + gamma * same-category`` per consecutive link. Returns
    (score, members) or None when there are no detections.
    """
    best = None
    prev = {}
    for t in range(max(dets_by_frame, default=-1) + 1):
        dets = dets_by_frame.get(t, [])
        prev_dets = dets_by_frame.get(t - 1, [])
        cur = {}
        for k, det in enumerate(dets):
            base = weights.alpha * math.log(det.score)
            cand = (base, ((t, k),))
            for j, prev_chain in prev.items():
                pdet = prev_dets[j]
                link = weights.beta * box_iou(pdet.box, det.box) + weights.gamma * (
                    1.0 if pdet.category_id == det.category_id else 0.0
                )
                ext = (prev_chain[0] + link + base, prev_chain[1] + ((t, k),))
                if _chain_better(ext, cand):
                    cand = ext
            cur[k] = cand
            if best is None or _chain_better(cand, best):
                best = cand
        prev = cur
    return best


def seq_tracker(frames, config: SeqConfig | None = None):
    """Offline tracker: repeated best-chain extraction with removal.

    Halts when the best remaining chain is shorter than
    ``min(config.min_track_length, video length)``, where the video length
    is taken as the largest frame index plus one.
    """
    if config is None:
        config = SeqConfig()
    frames = sorted(frames, key=lambda f: f.frame_index)
    if not frames:
        return []
    video_ids = {f.video_id for f in frames}
    if len(video_ids) > 1:
        raise ValueError(f"frames span multiple videos: {sorted(video_ids)}")
    video_id = frames[0].video_id
    dets_by_frame = {f.frame_index: list(f.detections) for f in frames}
    length = max(dets_by_frame) + 1
    min_len = min(config.min_track_length, length)

    chains = []
    while True:
        best = best_chain(dets_by_frame, config.weights)
        if best is None or len(best[1]) < min_len:
            break
        members = [(t, dets_by_frame[t][k]) for t, k in best[1]]
        chains.append(members)
        for t, k in best[1]:
            dets_by_frame[t].pop(k)

    tracks = []
    for label, members in enumerate(chains, start=1):
        scores = [d.score for _, d in members]
        categories = [d.category_id for _, d in members]
        tracks.append(
            InstanceTrack(
                instance_id=label,
                video_id=video_id,
                category_id=majority_category(categories, scores),
                masks={t: d.mask for t, d in members},
                boxes={t: d.box for t, d in members},
                confidence=float(np.mean(scores)),
            )
        )
    return tracks
