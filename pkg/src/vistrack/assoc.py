"""Online instance association: memory probabilities, multi-cue scores, NMS.

Videos are processed one frame at a time. An external memory holds one
entry per identified instance (latest feature, box, and category plus
per-frame histories). Each surviving detection in a frame is scored
against every memory entry by combining appearance probability, detection
confidence, box overlap, and category consistency; the detection takes the
best label or opens a new instance. Within a frame all detections see the
same memory snapshot, and when several detections claim one label the
highest-scoring detection keeps it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .io import InstanceTrack
from .mask import box_iou, mask_iou


@dataclass(frozen=True)
class CueWeights:
    """Balance of detection-confidence, box-IoU, and category-consistency cues."""

    alpha: float = 1.0
    beta: float = 2.0
    gamma: float = 10.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {v}")


@dataclass(frozen=True)
class TrackerConfig:
    weights: CueWeights = CueWeights()
    nms_iou: float = 0.5
    score_floor: float = 0.05
    nms_on_masks: bool = False  # suppress by mask IoU instead of box IoU


@dataclass
class MemoryEntry:
    """State of one identified instance."""

    label: int
    feature: np.ndarray | None
    last_box: object
    category_id: int
    score_history: list = field(default_factory=list)
    category_history: list = field(default_factory=list)
    mask_by_frame: dict = field(default_factory=dict)
    box_by_frame: dict = field(default_factory=dict)


class TrackerState:
    """External memory plus configuration for one video. Not thread-shared."""

    def __init__(self, video_id=None, config: TrackerConfig | None = None):
        self.video_id = video_id
        self.config = config if config is not None else TrackerConfig()
        self.memory = []
        self.frames_processed = 0

    @property
    def num_instances(self) -> int:
        return len(self.memory)


def _log_assign_probabilities(query, features):
    """Log-probabilities over labels 0..N (0 = new), shift-stabilized."""
    if len(features):
        logits = np.concatenate(([0.0], features @ query))
    else:
        logits = np.zeros(1)
    m = logits.max()
    return logits - (m + np.log(np.exp(logits - m).sum()))


def assign_probabilities(query_feature, memory) -> np.ndarray:
    """Probability of assigning each label 0..N to a candidate feature.

    Index 0 is the new-instance label; index n corresponds to memory entry
    n. The memory entries' stored features are the reference set.
    """
    q = np.asarray(query_feature, dtype=np.float64)
    if q.ndim != 1:
        raise DimensionError(f"query feature must be 1-D, got shape {q.shape}")
    feats = np.zeros((len(memory), len(q)))
    for row, e in enumerate(memory):
        if e.feature is None or len(e.feature) != len(q):
            raise DimensionError(
                f"memory entry {e.label}: feature dimension mismatch with query ({len(q)})"
            )
        feats[row] = e.feature
    return np.exp(_log_assign_probabilities(q, feats))


def combined_score(p_n, det, entry: MemoryEntry, weights: CueWeights) -> float:
    """Multi-cue assignment score for giving ``entry``'s label to ``det``."""
    same_category = 1.0 if det.category_id == entry.category_id else 0.0
    return (
        math.log(p_n)
        + weights.alpha * math.log(det.score)
        + weights.beta * box_iou(det.box, entry.last_box)
        + weights.gamma * same_category
    )


def _nms_keep(detections, nms_iou, score_floor, on_masks):
    """Per-category greedy suppression; returns kept indices in input order."""
    alive = [i for i, d in enumerate(detections) if d.score >= score_floor]
    by_category = {}
    for i in alive:
        by_category.setdefault(detections[i].category_id, []).append(i)
    kept = []
    for cid in sorted(by_category):
        order = sorted(by_category[cid], key=lambda i: (-detections[i].score, i))
        chosen = []
        for i in order:
            suppressed = False
            for j in chosen:
                if on_masks:
                    overlap = mask_iou(detections[i].mask, detections[j].mask)
                else:
                    overlap = box_iou(detections[i].box, detections[j].box)
                if overlap > nms_iou:
                    suppressed = True
                    break
            if not suppressed:
                chosen.append(i)
        kept.extend(chosen)
    return sorted(kept)


def nms(detections, nms_iou=0.5, score_floor=0.05, on_masks=False):
    """Filtered detections after score floor and per-category suppression."""
    keep = _nms_keep(detections, nms_iou, score_floor, on_masks)
    return [detections[i] for i in keep]


def _resolve_assignments(order, candidates, new_scores, compare_new):
    """Decide one label (or 0 = new) per detection index.

    ``candidates[i]`` maps existing labels to their scores for detection i;
    ``new_scores[i]`` scores opening a new instance. With ``compare_new``
    the new option competes by score (ties keep the existing label);
    otherwise it is taken only when no existing label is available. When
    several detections claim one label, the largest score keeps it and the
    losers re-resolve among their remaining options.
    """
    rank = {i: r for r, i in enumerate(order)}
    banned = {i: set() for i in order}
    while True:
        picks = {}
        for i in order:
            best = None
            for n, v in candidates[i].items():
                if n in banned[i]:
                    continue
                if best is None or v > best[0] or (v == best[0] and n < best[1]):
                    best = (v, n)
            if best is None or (compare_new and new_scores[i] > best[0]):
                picks[i] = 0
            else:
                picks[i] = best[1]
        claims = {}
        for i in order:
            if picks[i] != 0:
                claims.setdefault(picks[i], []).append(i)
        conflicts = {n: idxs for n, idxs in claims.items() if len(idxs) > 1}
        if not conflicts:
            return picks
        for n, idxs in conflicts.items():
            winner = max(idxs, key=lambda i: (candidates[i][n], -rank[i]))
            for i in idxs:
                if i != winner:
                    banned[i].add(n)


def _apply_assignments(state: TrackerState, frame, order, picks):
    """Update the memory per the resolved picks; returns index -> label."""
    assignments = {}
    for i in order:
        det = frame.detections[i]
        label = picks[i]
        if label == 0:
            entry = MemoryEntry(
                label=len(state.memory) + 1,
                feature=det.feature,
                last_box=det.box,
                category_id=det.category_id,
            )
            state.memory.append(entry)
            label = entry.label
        else:
            entry = state.memory[label - 1]
            entry.feature = det.feature
            entry.last_box = det.box
            entry.category_id = det.category_id
        entry.score_history.append(det.score)
        entry.category_history.append(det.category_id)
        entry.mask_by_frame[frame.frame_index] = det.mask
        entry.box_by_frame[frame.frame_index] = det.box
        assignments[i] = label
    state.frames_processed += 1
    return assignments


def step(state: TrackerState, frame):
    """Process one frame: NMS, scoring, conflict resolution, memory update.

    Detections are visited in descending detection score. Returns the
    (mutated) state and a mapping from surviving detection index (into
    ``frame.detections``) to assigned instance label. On a first frame the
    memory is empty, so every surviving detection opens a new instance.
    """
    cfg = state.config
    if state.video_id is None:
        state.video_id = frame.video_id
    keep = _nms_keep(frame.detections, cfg.nms_iou, cfg.score_floor, cfg.nms_on_masks)
    order = sorted(keep, key=lambda i: (-frame.detections[i].score, i))

    dim = None
    for e in state.memory:
        if e.feature is None:
            raise DimensionError(f"memory entry {e.label} lacks a feature vector")
        if dim is None:
            dim = len(e.feature)
        elif len(e.feature) != dim:
            raise DimensionError(f"memory entry {e.label}: inconsistent feature dimension")
    features = np.zeros((len(state.memory), dim or 0))
    for row, e in enumerate(state.memory):
        features[row] = e.feature

    candidates = {}
    new_scores = {}
    w = cfg.weights
    for i in order:
        det = frame.detections[i]
        if det.feature is None:
            raise DimensionError("detection lacks a feature vector required for appearance scoring")
        if dim is not None and dim != len(det.feature):
            raise DimensionError(
                f"feature dimension {len(det.feature)} does not match memory ({dim})"
            )
        logp = _log_assign_probabilities(np.asarray(det.feature, dtype=np.float64), features)
        log_s = math.log(det.score)
        candidates[i] = {
            e.label: (
                logp[e.label]
                + w.alpha * log_s
                + w.beta * box_iou(det.box, e.last_box)
                + w.gamma * (1.0 if det.category_id == e.category_id else 0.0)
            )
            for e in state.memory
        }
        new_scores[i] = logp[0] + w.alpha * log_s

    picks = _resolve_assignments(order, candidates, new_scores, compare_new=True)
    assignments = _apply_assignments(state, frame, order, picks)
    return state, assignments


def majority_category(categories, scores):
    """Most frequent category; ties prefer the larger summed detection score."""
    totals = {}
    for c, s in zip(categories, scores):
        count, total = totals.get(c, (0, 0.0))
        totals[c] = (count + 1, total + s)
    return min(totals.items(), key=lambda kv: (-kv[1][0], -kv[1][1], kv[0]))[0]


def finalize(state: TrackerState):
    """Turn the memory into instance tracks.

    Per instance: confidence is the mean of its detection scores, the
    category is the majority vote over its per-frame category labels, and
    the masks are the accumulated per-frame masks.
    """
    tracks = []
    for e in state.memory:
        tracks.append(
            InstanceTrack(
                instance_id=e.label,
                video_id=state.video_id,
                category_id=majority_category(e.category_history, e.score_history),
                masks=dict(e.mask_by_frame),
                boxes=dict(e.box_by_frame),
                confidence=float(np.mean(e.score_history)),
            )
        )
    return tracks


def track_video(frames, config: TrackerConfig | None = None):
    """Track one video's detections frame by frame and finalize.

    ``frames`` holds the FrameDetections of a single video in any order;
    they are processed by ascending frame index. Deterministic.
    """
    frames = sorted(frames, key=lambda f: f.frame_index)
    if not frames:
        return []
    video_ids = {f.video_id for f in frames}
    if len(video_ids) > 1:
        raise ValueError(f"frames span multiple videos: {sorted(video_ids)}")
    state = TrackerState(video_id=frames[0].video_id, config=config)
    for frame in frames:
        step(state, frame)
    return finalize(state)
