"""Data model for videos, ground truth, detections, and results, plus file I/O.

Three JSON formats (UTF-8):

* ``gt.json`` follows the public VIS annotation layout: ``videos``,
  ``categories``, and ``annotations`` with per-frame segmentation lists of
  length T (nulls mark frames where the object is absent).
* ``detections.json`` is toolkit-specific: a declared ``feature_dim`` and
  per-video, per-frame detection records (box, score, category,
  segmentation, optional feature vector).
* ``results.json`` is a flat list of hypothesis records.

Frame indices are 0-based in every file. RLE counts are stored as plain
integer lists; the reader also accepts the compressed-string counts form
used by standard annotation files. Floats round-trip bit-exactly (shortest
round-trip decimal serialization).
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, MalformedRleError, ReferentialError, SchemaError
from .mask import Box, RleMask, tight_box

SCORE_FLOOR = 1e-9  # log(score) must stay finite downstream


@dataclass(frozen=True)
class CategorySet:
    """Predefined category label set: positive unique ids mapped to names."""

    names: dict

    def __post_init__(self):
        if not self.names:
            raise ValueError("category set must be non-empty")
        for cid in self.names:
            if not isinstance(cid, int) or cid <= 0:
                raise ValueError(f"category ids must be positive integers, got {cid!r}")

    def __contains__(self, category_id) -> bool:
        return category_id in self.names

    def __iter__(self):
        return iter(sorted(self.names))

    def __len__(self):
        return len(self.names)


@dataclass(frozen=True)
class VideoMeta:
    video_id: int
    width: int
    height: int
    length: int

    def __post_init__(self):
        if self.length < 1:
            raise ValueError(f"video {self.video_id}: length must be >= 1")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"video {self.video_id}: dimensions must be positive")


@dataclass
class InstanceTrack:
    """One ground-truth or hypothesized object across a video.

    ``masks`` and ``boxes`` map frame index to per-frame values; absent
    entries mean the object is not present in that frame. ``feature`` is an
    optional identity embedding used by the oracle harness.
    """

    instance_id: int
    video_id: int
    category_id: int
    masks: dict
    boxes: dict
    confidence: float | None = None
    feature: np.ndarray | None = None

    def frames(self):
        return sorted(self.masks)

    def validate(self, video: VideoMeta):
        if not any(m.area() > 0 for m in self.masks.values()):
            raise ValueError(
                f"instance {self.instance_id}: needs at least one non-empty mask"
            )
        for t, m in self.masks.items():
            if not 0 <= t < video.length:
                raise ValueError(
                    f"instance {self.instance_id}: frame {t} outside [0, {video.length})"
                )
            if m.size != (video.height, video.width):
                raise DimensionError(
                    f"instance {self.instance_id}: mask size {m.size} does not match "
                    f"video size {(video.height, video.width)}"
                )


@dataclass
class Detection:
    """Single per-frame detector output."""

    box: Box
    mask: RleMask
    category_id: int
    score: float
    feature: np.ndarray | None = None


@dataclass
class FrameDetections:
    video_id: int
    frame_index: int
    detections: list


@dataclass
class GroundTruth:
    """Loaded gt.json bundle: categories, video metadata, instance tracks."""

    categories: CategorySet
    videos: dict
    tracks: list


@dataclass
class DetectionSet:
    """Loaded detections.json bundle: shared feature dim, frames per video."""

    feature_dim: int
    videos: dict = field(default_factory=dict)  # video_id -> [FrameDetections]


def decode_compressed_counts(data: str) -> list:
    """Decode the compressed-string RLE counts used by standard annotation files.

    Each count is emitted low-five-bits-first in printable chars offset by
    48, with bit 0x20 flagging continuation; counts from the fourth onward
    are deltas against the count two positions back.
    """
    counts = []
    pos = 0
    while pos < len(data):
        x = 0
        k = 0
        while True:
            c = ord(data[pos]) - 48
            if c < 0 or c > 63:
                raise MalformedRleError(f"invalid character in counts string at {pos}")
            x |= (c & 0x1F) << (5 * k)
            pos += 1
            k += 1
            if not c & 0x20:
                if c & 0x10:
                    x |= -1 << (5 * k)
                break
            if pos >= len(data):
                raise MalformedRleError("truncated counts string")
        if len(counts) > 2:
            x += counts[-2]
        counts.append(x)
    return counts


def _rle_from_json(obj, path, field_name) -> RleMask:
    if not isinstance(obj, dict) or "size" not in obj or "counts" not in obj:
        raise SchemaError("segmentation must carry 'size' and 'counts'", path, field_name)
    size = obj["size"]
    if (
        not isinstance(size, (list, tuple))
        or len(size) != 2
        or not all(isinstance(v, int) for v in size)
    ):
        raise SchemaError("'size' must be [height, width] integers", path, field_name)
    counts = obj["counts"]
    if isinstance(counts, str):
        counts = decode_compressed_counts(counts)
    if not isinstance(counts, list) or not all(isinstance(c, int) for c in counts):
        raise SchemaError("'counts' must be an integer list or string", path, field_name)
    try:
        return RleMask(height=size[0], width=size[1], counts=tuple(counts))
    except (MalformedRleError, DimensionError) as e:
        raise SchemaError(str(e), path, field_name) from e


def _rle_to_json(rle: RleMask) -> dict:
    return {"size": [rle.height, rle.width], "counts": list(rle.counts)}


def _require(obj, key, path, context):
    if key not in obj:
        raise SchemaError("missing required key", path, f"{context}.{key}")
    return obj[key]


def _as_int(value, path, field_name):
    if not isinstance(value, int) or isinstance(value, bool):
        raise SchemaError(f"expected integer, got {value!r}", path, field_name)
    return value


def _as_score(value, path, field_name):
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise SchemaError(f"expected number, got {value!r}", path, field_name)
    s = float(value)
    if s <= 0.0 or s > 1.0:
        raise SchemaError(f"score must be in (0, 1], got {s}", path, field_name)
    return max(s, SCORE_FLOOR)


def _box_from_json(value, path, field_name) -> Box:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 4
        or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    ):
        raise SchemaError("bbox must be [x, y, w, h] numbers", path, field_name)
    x, y, w, h = (float(v) for v in value)
    if w < 0 or h < 0:
        raise SchemaError(f"bbox extent must be non-negative, got w={w} h={h}", path, field_name)
    return Box(x, y, w, h)


def _feature_from_json(value, feature_dim, path, field_name):
    if value is None:
        return None
    if not isinstance(value, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        raise SchemaError("feature must be a list of numbers", path, field_name)
    if feature_dim is not None and len(value) != feature_dim:
        raise SchemaError(
            f"feature length {len(value)} != declared dim {feature_dim}", path, field_name
        )
    return np.asarray(value, dtype=np.float64)


def _read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise SchemaError(f"cannot read file: {e}", path) from e
    except json.JSONDecodeError as e:
        raise SchemaError(f"invalid JSON: {e}", path) from e


def load_ground_truth(path) -> GroundTruth:
    """Load and validate a gt.json file."""
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object", path)

    videos = {}
    for i, v in enumerate(_require(doc, "videos", path, "gt")):
        vid = _as_int(_require(v, "id", path, f"videos[{i}]"), path, f"videos[{i}].id")
        if vid in videos:
            raise SchemaError(f"duplicate video id {vid}", path, f"videos[{i}].id")
        try:
            videos[vid] = VideoMeta(
                video_id=vid,
                width=_as_int(_require(v, "width", path, f"videos[{i}]"), path, f"videos[{i}].width"),
                height=_as_int(_require(v, "height", path, f"videos[{i}]"), path, f"videos[{i}].height"),
                length=_as_int(_require(v, "length", path, f"videos[{i}]"), path, f"videos[{i}].length"),
            )
        except ValueError as e:
            raise SchemaError(str(e), path, f"videos[{i}]") from e
    if not videos:
        raise SchemaError("no videos declared", path, "videos")

    names = {}
    for i, c in enumerate(_require(doc, "categories", path, "gt")):
        cid = _as_int(_require(c, "id", path, f"categories[{i}]"), path, f"categories[{i}].id")
        if cid in names:
            raise SchemaError(f"duplicate category id {cid}", path, f"categories[{i}].id")
        names[cid] = str(_require(c, "name", path, f"categories[{i}]"))
    try:
        categories = CategorySet(names)
    except ValueError as e:
        raise SchemaError(str(e), path, "categories") from e

    tracks = []
    seen_ids = set()
    feature_dim = None
    for i, ann in enumerate(_require(doc, "annotations", path, "gt")):
        ctx = f"annotations[{i}]"
        ann_id = _as_int(_require(ann, "id", path, ctx), path, f"{ctx}.id")
        if ann_id in seen_ids:
            raise SchemaError(f"duplicate annotation id {ann_id}", path, f"{ctx}.id")
        seen_ids.add(ann_id)
        vid = _as_int(_require(ann, "video_id", path, ctx), path, f"{ctx}.video_id")
        if vid not in videos:
            raise ReferentialError(f"annotation references undeclared video {vid}", path, f"{ctx}.video_id")
        cid = _as_int(_require(ann, "category_id", path, ctx), path, f"{ctx}.category_id")
        if cid not in categories:
            raise ReferentialError(
                f"annotation references undeclared category {cid}", path, f"{ctx}.category_id"
            )
        video = videos[vid]
        segs = _require(ann, "segmentations", path, ctx)
        if not isinstance(segs, list) or len(segs) != video.length:
            raise SchemaError(
                f"segmentations must be a list of length {video.length}", path, f"{ctx}.segmentations"
            )
        masks = {}
        for t, seg in enumerate(segs):
            if seg is None:
                continue
            masks[t] = _rle_from_json(seg, path, f"{ctx}.segmentations[{t}]")
        raw_boxes = ann.get("bboxes")
        boxes = {}
        if raw_boxes is not None:
            if not isinstance(raw_boxes, list) or len(raw_boxes) != video.length:
                raise SchemaError(
                    f"bboxes must be a list of length {video.length}", path, f"{ctx}.bboxes"
                )
            for t, b in enumerate(raw_boxes):
                if b is None:
                    continue
                boxes[t] = _box_from_json(b, path, f"{ctx}.bboxes[{t}]")
        for t in masks:
            if t not in boxes:
                boxes[t] = tight_box(masks[t])
        feat = _feature_from_json(ann.get("feature"), feature_dim, path, f"{ctx}.feature")
        if feat is not None:
            feature_dim = len(feat)
        track = InstanceTrack(
            instance_id=ann_id,
            video_id=vid,
            category_id=cid,
            masks=masks,
            boxes=boxes,
            feature=feat,
        )
        try:
            track.validate(video)
        except (ValueError, DimensionError) as e:
            raise SchemaError(str(e), path, ctx) from e
        tracks.append(track)

    return GroundTruth(categories=categories, videos=videos, tracks=tracks)


def load_detections(path) -> DetectionSet:
    """Load and validate a detections.json file."""
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object", path)
    feature_dim = _as_int(_require(doc, "feature_dim", path, "detections"), path, "feature_dim")
    if feature_dim < 0:
        raise SchemaError("feature_dim must be >= 0", path, "feature_dim")
    out = DetectionSet(feature_dim=feature_dim)
    for i, v in enumerate(_require(doc, "videos", path, "detections")):
        ctx = f"videos[{i}]"
        vid = _as_int(_require(v, "video_id", path, ctx), path, f"{ctx}.video_id")
        if vid in out.videos:
            raise SchemaError(f"duplicate video id {vid}", path, f"{ctx}.video_id")
        frames = []
        seen_frames = set()
        mask_size = None
        for j, fr in enumerate(_require(v, "frames", path, ctx)):
            fctx = f"{ctx}.frames[{j}]"
            t = _as_int(_require(fr, "frame_index", path, fctx), path, f"{fctx}.frame_index")
            if t < 0:
                raise SchemaError(f"frame_index must be >= 0, got {t}", path, f"{fctx}.frame_index")
            if t in seen_frames:
                raise SchemaError(f"duplicate frame_index {t}", path, f"{fctx}.frame_index")
            seen_frames.add(t)
            dets = []
            for k, d in enumerate(_require(fr, "detections", path, fctx)):
                dctx = f"{fctx}.detections[{k}]"
                box = _box_from_json(_require(d, "bbox", path, dctx), path, f"{dctx}.bbox")
                score = _as_score(_require(d, "score", path, dctx), path, f"{dctx}.score")
                cid = _as_int(_require(d, "category_id", path, dctx), path, f"{dctx}.category_id")
                rle = _rle_from_json(
                    _require(d, "segmentation", path, dctx), path, f"{dctx}.segmentation"
                )
                if mask_size is None:
                    mask_size = rle.size
                elif rle.size != mask_size:
                    raise SchemaError(
                        f"mask size {rle.size} differs from {mask_size} within video {vid}",
                        path,
                        f"{dctx}.segmentation",
                    )
                feat = _feature_from_json(d.get("feature"), feature_dim, path, f"{dctx}.feature")
                dets.append(Detection(box=box, mask=rle, category_id=cid, score=score, feature=feat))
            frames.append(FrameDetections(video_id=vid, frame_index=t, detections=dets))
        frames.sort(key=lambda f: f.frame_index)
        out.videos[vid] = frames
    return out


def load_results(path, videos=None) -> list:
    """Load a results.json file into hypothesis tracks.

    Hypotheses get 1-based instance ids in file order. When ``videos`` is
    given, per-video lengths and mask sizes are validated against it.
    """
    doc = _read_json(path)
    if not isinstance(doc, list):
        raise SchemaError("top level must be a list of result records", path)
    tracks = []
    for i, rec in enumerate(doc):
        ctx = f"results[{i}]"
        vid = _as_int(_require(rec, "video_id", path, ctx), path, f"{ctx}.video_id")
        cid = _as_int(_require(rec, "category_id", path, ctx), path, f"{ctx}.category_id")
        score = _as_score(_require(rec, "score", path, ctx), path, f"{ctx}.score")
        segs = _require(rec, "segmentations", path, ctx)
        if not isinstance(segs, list):
            raise SchemaError("segmentations must be a list", path, f"{ctx}.segmentations")
        if videos is not None:
            if vid not in videos:
                raise ReferentialError(f"result references undeclared video {vid}", path, f"{ctx}.video_id")
            if len(segs) != videos[vid].length:
                raise SchemaError(
                    f"segmentations must have length {videos[vid].length}",
                    path,
                    f"{ctx}.segmentations",
                )
        masks = {}
        for t, seg in enumerate(segs):
            if seg is None:
                continue
            masks[t] = _rle_from_json(seg, path, f"{ctx}.segmentations[{t}]")
        if not any(m.area() > 0 for m in masks.values()):
            raise SchemaError("needs at least one non-empty mask", path, f"{ctx}.segmentations")
        boxes = {t: tight_box(m) for t, m in masks.items()}
        track = InstanceTrack(
            instance_id=i + 1,
            video_id=vid,
            category_id=cid,
            masks=masks,
            boxes=boxes,
            confidence=score,
        )
        if videos is not None:
            try:
                track.validate(videos[vid])
            except (ValueError, DimensionError) as e:
                raise SchemaError(str(e), path, ctx) from e
        tracks.append(track)
    return tracks


def _atomic_write_text(path, text):
    """Write via a temp file in the target directory plus rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump_canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def save_results(hypotheses, videos, path):
    """Write hypothesis tracks as results.json (atomic, canonical key order)."""
    records = []
    for h in hypotheses:
        if h.video_id not in videos:
            raise ValueError(f"hypothesis references unknown video {h.video_id}")
        length = videos[h.video_id].length
        segs = [None] * length
        for t, m in h.masks.items():
            segs[t] = _rle_to_json(m)
        records.append(
            {
                "video_id": h.video_id,
                "category_id": h.category_id,
                "score": h.confidence,
                "segmentations": segs,
            }
        )
    _atomic_write_text(path, _dump_canonical(records))


def save_ground_truth(gt: GroundTruth, path):
    """Write a GroundTruth bundle as gt.json (atomic, canonical key order)."""
    doc = {
        "videos": [
            {"id": v.video_id, "width": v.width, "height": v.height, "length": v.length}
            for v in sorted(gt.videos.values(), key=lambda v: v.video_id)
        ],
        "categories": [{"id": cid, "name": gt.categories.names[cid]} for cid in gt.categories],
        "annotations": [],
    }
    for track in gt.tracks:
        length = gt.videos[track.video_id].length
        segs = [None] * length
        for t, m in track.masks.items():
            segs[t] = _rle_to_json(m)
        boxes = [None] * length
        for t, b in track.boxes.items():
            boxes[t] = [b.x, b.y, b.w, b.h]
        ann = {
            "id": track.instance_id,
            "video_id": track.video_id,
            "category_id": track.category_id,
            "segmentations": segs,
            "bboxes": boxes,
        }
        if track.feature is not None:
            ann["feature"] = [float(v) for v in track.feature]
        doc["annotations"].append(ann)
    _atomic_write_text(path, _dump_canonical(doc))


def save_detections(dets: DetectionSet, path):
    """Write a DetectionSet as detections.json (atomic, canonical key order)."""
    doc = {"feature_dim": dets.feature_dim, "videos": []}
    for vid in sorted(dets.videos):
        frames = []
        for fr in sorted(dets.videos[vid], key=lambda f: f.frame_index):
            recs = []
            for d in fr.detections:
                rec = {
                    "bbox": [d.box.x, d.box.y, d.box.w, d.box.h],
                    "score": d.score,
                    "category_id": d.category_id,
                    "segmentation": _rle_to_json(d.mask),
                }
                if d.feature is not None:
                    rec["feature"] = [float(v) for v in d.feature]
                recs.append(rec)
            frames.append({"frame_index": fr.frame_index, "detections": recs})
        doc["videos"].append({"video_id": vid, "frames": frames})
    _atomic_write_text(path, _dump_canonical(doc))
