"""Deterministic synthetic video generator and the oracle harness.

Videos contain rectangles and ellipses moving with constant velocity
(bouncing off frame borders), rendered to RLE masks. Detections are
derived from the ground truth with configurable corruption: box jitter,
misses, false positives, and feature noise. Identity features are
unit-norm per-object prototypes scaled by a temperature; when the object
count does not exceed the feature dimension the prototypes are mutually
orthogonal.

Randomness comes from numpy's PCG64 generator; video v of a run uses the
child chosen by ``SeedSequence(seed).spawn(num_videos)[v]``, so outputs
are reproducible and independent of video-level parallelism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assoc import CueWeights, TrackerConfig, majority_category, track_video
from .errors import ConfigError, DimensionError, EvaluationError
from .io import (
    CategorySet,
    Detection,
    DetectionSet,
    FrameDetections,
    GroundTruth,
    InstanceTrack,
    VideoMeta,
)
from .mask import RleMask, mask_iou, rle_encode, tight_box

_SHAPES = ("rect", "ellipse")
_PLACEMENT_ATTEMPTS = 500


@dataclass(frozen=True)
class SynthConfig:
    num_videos: int = 1
    length: int = 10
    width: int = 96
    height: int = 64
    num_objects: int = 3
    num_categories: int = 4
    min_object_size: int = 8
    max_object_size: int = 20
    max_speed: float = 4.0
    entry_exit_prob: float = 0.0
    box_jitter: float = 0.0
    score_range: tuple = (0.6, 0.95)
    feature_dim: int = 16
    feature_noise: float = 0.0
    feature_temperature: float = 4.0
    false_positive_rate: float = 0.0
    miss_rate: float = 0.0
    allow_overlap: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "score_range", tuple(float(s) for s in self.score_range))
        if self.length < 1:
            raise ConfigError("length must be >= 1")
        if self.num_videos < 1:
            raise ConfigError("num_videos must be >= 1")
        if self.width <= 0 or self.height <= 0:
            raise ConfigError("frame dimensions must be positive")
        if self.num_objects < 0:
            raise ConfigError("num_objects must be >= 0")
        if self.num_categories < 1:
            raise ConfigError("num_categories must be >= 1")
        if not 2 <= self.min_object_size <= self.max_object_size:
            raise ConfigError("object sizes must satisfy 2 <= min <= max")
        if self.max_object_size > min(self.width, self.height):
            raise ConfigError(
                f"objects of size {self.max_object_size} do not fit in a "
                f"{self.width}x{self.height} frame"
            )
        for name in ("entry_exit_prob", "false_positive_rate", "miss_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        lo, hi = self.score_range
        if not 0.0 < lo <= hi <= 1.0:
            raise ConfigError(f"score_range must satisfy 0 < lo <= hi <= 1, got {self.score_range}")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be >= 1")
        if self.box_jitter < 0 or self.feature_noise < 0:
            raise ConfigError("noise sigmas must be non-negative")
        if self.feature_temperature <= 0:
            raise ConfigError("feature_temperature must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class _SynthObject:
    shape: str
    size: tuple
    category_id: int
    first_frame: int
    last_frame: int  # exclusive
    positions: dict = field(default_factory=dict)  # frame -> (x, y) ints


def _render(shape, x, y, w, h, width, height) -> RleMask:
    grid = np.zeros((height, width), dtype=bool)
    if shape == "rect":
        grid[y : y + h, x : x + w] = True
    else:
        cy = y + h / 2.0
        cx = x + w / 2.0
        yy, xx = np.mgrid[y : y + h, x : x + w]
        grid[y : y + h, x : x + w] = (
            ((xx + 0.5 - cx) / (w / 2.0)) ** 2 + ((yy + 0.5 - cy) / (h / 2.0)) ** 2
        ) <= 1.0
    return rle_encode(grid)


def _bounce(pos, vel, limit):
    pos += vel
    if limit <= 0:
        return 0.0, vel
    while pos < 0 or pos > limit:
        if pos < 0:
            pos = -pos
        else:
            pos = 2 * limit - pos
        vel = -vel
    return pos, vel


def _boxes_intersect(a, b):
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    return ax < bx + bw and bx < ax + aw and ay < by + bh and by < ay + ah


def _sample_objects(config: SynthConfig, rng) -> list:
    for _ in range(_PLACEMENT_ATTEMPTS):
        objects = []
        for _ in range(config.num_objects):
            w = int(rng.integers(config.min_object_size, config.max_object_size + 1))
            h = int(rng.integers(config.min_object_size, config.max_object_size + 1))
            x = float(rng.integers(0, config.width - w + 1))
            y = float(rng.integers(0, config.height - h + 1))
            vx, vy = rng.uniform(-config.max_speed, config.max_speed, size=2)
            shape = _SHAPES[int(rng.integers(len(_SHAPES)))]
            category = int(rng.integers(1, config.num_categories + 1))
            first, last = 0, config.length
            if config.length >= 3 and rng.uniform() < config.entry_exit_prob:
                if rng.uniform() < 0.5:
                    first = int(rng.integers(1, config.length - 1))
                else:
                    last = int(rng.integers(first + 2, config.length))
            obj = _SynthObject(shape, (w, h), category, first, last)
            for t in range(config.length):
                if first <= t < last:
                    obj.positions[t] = (int(round(x)), int(round(y)))
                x, vx = _bounce(x, vx, config.width - w)
                y, vy = _bounce(y, vy, config.height - h)
            objects.append(obj)
        if config.allow_overlap or not _any_overlap(objects):
            return objects
    raise ConfigError(
        "could not place non-overlapping objects; reduce count/size or set allow_overlap"
    )


def _any_overlap(objects) -> bool:
    for i, a in enumerate(objects):
        for b in objects[i + 1 :]:
            for t, pa in a.positions.items():
                pb = b.positions.get(t)
                if pb is None:
                    continue
                if _boxes_intersect(pa + a.size, pb + b.size):
                    return True
    return False


def _prototypes(n, dim, rng) -> np.ndarray:
    """Unit-norm identity prototypes; mutually orthogonal when n <= dim."""
    if n == 0:
        return np.zeros((0, dim))
    if n <= dim:
        g = rng.normal(size=(dim, n))
        q, r = np.linalg.qr(g)
        signs = np.sign(np.diag(r))
        signs[signs == 0] = 1.0
        return (q * signs).T
    v = rng.normal(size=(n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _noisy_feature(proto, config: SynthConfig, rng) -> np.ndarray:
    f = proto
    if config.feature_noise > 0:
        f = proto + rng.normal(0.0, config.feature_noise, size=proto.shape)
        f = f / np.linalg.norm(f)
    return config.feature_temperature * f


def _generate_video(config: SynthConfig, video_id, first_instance_id, rng):
    objects = _sample_objects(config, rng)
    protos = _prototypes(config.num_objects, config.feature_dim, rng)

    tracks = []
    gt_masks = []  # per object: frame -> RleMask
    for o, obj in enumerate(objects):
        masks = {}
        boxes = {}
        for t, (x, y) in sorted(obj.positions.items()):
            m = _render(obj.shape, x, y, obj.size[0], obj.size[1], config.width, config.height)
            masks[t] = m
            boxes[t] = tight_box(m)
        gt_masks.append(masks)
        tracks.append(
            InstanceTrack(
                instance_id=first_instance_id + o,
                video_id=video_id,
                category_id=obj.category_id,
                masks=masks,
                boxes=boxes,
                feature=config.feature_temperature * protos[o],
            )
        )

    frames = []
    for t in range(config.length):
        dets = []
        for o, obj in enumerate(objects):
            if t not in obj.positions:
                continue
            if rng.uniform() < config.miss_rate:
                continue
            x, y = obj.positions[t]
            w, h = obj.size
            if config.box_jitter > 0:
                dx, dy = rng.normal(0.0, config.box_jitter, size=2)
                x = int(round(min(max(x + dx, 0), config.width - w)))
                y = int(round(min(max(y + dy, 0), config.height - h)))
            mask = _render(obj.shape, x, y, w, h, config.width, config.height)
            dets.append(
                Detection(
                    box=tight_box(mask),
                    mask=mask,
                    category_id=obj.category_id,
                    score=float(rng.uniform(*config.score_range)),
                    feature=_noisy_feature(protos[o], config, rng),
                )
            )
        if rng.uniform() < config.false_positive_rate:
            w = int(rng.integers(config.min_object_size, config.max_object_size + 1))
            h = int(rng.integers(config.min_object_size, config.max_object_size + 1))
            x = int(rng.integers(0, config.width - w + 1))
            y = int(rng.integers(0, config.height - h + 1))
            mask = _render("rect", x, y, w, h, config.width, config.height)
            direction = rng.normal(size=config.feature_dim)
            direction /= np.linalg.norm(direction)
            dets.append(
                Detection(
                    box=tight_box(mask),
                    mask=mask,
                    category_id=int(rng.integers(1, config.num_categories + 1)),
                    score=float(rng.uniform(*config.score_range)),
                    feature=config.feature_temperature * direction,
                )
            )
        frames.append(FrameDetections(video_id=video_id, frame_index=t, detections=dets))
    return tracks, frames


def generate(config: SynthConfig):
    """Produce a (GroundTruth, DetectionSet) pair, fully determined by the seed."""
    categories = CategorySet({i: f"class_{i}" for i in range(1, config.num_categories + 1)})
    videos = {}
    tracks = []
    det_videos = {}
    children = np.random.SeedSequence(config.seed).spawn(config.num_videos)
    for v in range(config.num_videos):
        video_id = v + 1
        rng = np.random.Generator(np.random.PCG64(children[v]))
        videos[video_id] = VideoMeta(
            video_id=video_id, width=config.width, height=config.height, length=config.length
        )
        video_tracks, frames = _generate_video(config, video_id, len(tracks) + 1, rng)
        tracks.extend(video_tracks)
        det_videos[video_id] = frames
    gt = GroundTruth(categories=categories, videos=videos, tracks=tracks)
    dets = DetectionSet(feature_dim=config.feature_dim, videos=det_videos)
    return gt, dets


def image_oracle(gt: GroundTruth, weights: CueWeights | None = None,
                 config: TrackerConfig | None = None):
    """Association quality probe: track per-frame ground-truth detections.

    Every ground-truth mask becomes a detection with score 1.0 and the
    instance's stored feature, so only the cross-frame association is
    exercised. Ground truth must carry features.
    """
    if config is None:
        config = TrackerConfig(weights=weights if weights is not None else CueWeights())
    hypotheses = []
    for video_id in sorted(gt.videos):
        video_tracks = sorted(
            (t for t in gt.tracks if t.video_id == video_id), key=lambda t: t.instance_id
        )
        for t in video_tracks:
            if t.feature is None:
                raise DimensionError(
                    f"instance {t.instance_id} lacks a feature vector; the image oracle "
                    "needs ground truth with features attached"
                )
        frames = []
        for t in range(gt.videos[video_id].length):
            dets = [
                Detection(
                    box=track.boxes[t],
                    mask=track.masks[t],
                    category_id=track.category_id,
                    score=1.0,
                    feature=track.feature,
                )
                for track in video_tracks
                if t in track.masks
            ]
            frames.append(FrameDetections(video_id=video_id, frame_index=t, detections=dets))
        hypotheses.extend(track_video(frames, config))
    return hypotheses


def identity_oracle(gt: GroundTruth, detections: DetectionSet):
    """Detection quality probe: aggregate detections by ground-truth identity.

    Each detection is matched per frame to the ground-truth instance of
    highest mask IoU (strictly positive required; unmatched detections are
    discarded); detections sharing a ground-truth identity across frames
    form one hypothesis, finalized like the online tracker (mean score,
    majority-vote category).
    """
    gt_by_video = {}
    for t in gt.tracks:
        gt_by_video.setdefault(t.video_id, []).append(t)

    groups = {}  # (video_id, gt instance id) -> {frame: (iou, score, order, det)}
    for video_id in sorted(detections.videos):
        if video_id not in gt.videos:
            raise EvaluationError(f"detections reference unknown video {video_id}")
        candidates = sorted(gt_by_video.get(video_id, []), key=lambda t: t.instance_id)
        for frame in detections.videos[video_id]:
            for idx, det in enumerate(frame.detections):
                best = None
                for g in candidates:
                    gm = g.masks.get(frame.frame_index)
                    if gm is None:
                        continue
                    v = mask_iou(det.mask, gm)
                    if v > 0 and (best is None or v > best[0]):
                        best = (v, g)
                if best is None:
                    continue
                key = (video_id, best[1].instance_id)
                slot = groups.setdefault(key, {})
                prev = slot.get(frame.frame_index)
                entry = (best[0], det.score, -idx, det)
                if prev is None or entry[:3] > prev[:3]:
                    slot[frame.frame_index] = entry

    hypotheses = []
    for label, key in enumerate(sorted(groups), start=1):
        video_id, _ = key
        members = sorted(groups[key].items())
        scores = [e[1] for _, e in members]
        categories = [e[3].category_id for _, e in members]
        hypotheses.append(
            InstanceTrack(
                instance_id=label,
                video_id=video_id,
                category_id=majority_category(categories, scores),
                masks={t: e[3].mask for t, e in members},
                boxes={t: e[3].box for t, e in members},
                confidence=float(np.mean(scores)),
            )
        )
    return hypotheses
