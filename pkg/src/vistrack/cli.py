"""Command-line surface: evaluate, track, synth, oracle, ablate.

Exit codes: 0 on success, 2 on input/validation errors (diagnostic naming
the file and field on stderr), 64 on usage errors. All outputs are written
atomically (temp file + rename). Flag defaults follow the reference
configuration: NMS at 0.50, cue weights 1/2/10, IoUTracker+ minimum IoU
0.30, SeqTracker length threshold 8.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import ablation, baselines, synth
from .assoc import CueWeights, TrackerConfig, track_video
from .errors import VistrackError
from .io import (
    VideoMeta,
    _atomic_write_text,
    _dump_canonical,
    load_detections,
    load_ground_truth,
    load_results,
    save_detections,
    save_ground_truth,
    save_results,
)
from .metrics import evaluate

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_USAGE = 64


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _weights_from_args(args) -> CueWeights:
    return CueWeights(alpha=args.alpha, beta=args.beta, gamma=args.gamma)


def _tracker_config_from_args(args) -> TrackerConfig:
    return TrackerConfig(
        weights=_weights_from_args(args),
        nms_iou=args.nms_iou,
        score_floor=args.score_floor,
        nms_on_masks=args.nms_on_masks,
    )


def _add_weight_flags(p):
    p.add_argument("--alpha", type=float, default=1.0, help="detection-confidence weight")
    p.add_argument("--beta", type=float, default=2.0, help="box-IoU weight")
    p.add_argument("--gamma", type=float, default=10.0, help="category-consistency weight")


def _add_tracker_flags(p):
    _add_weight_flags(p)
    p.add_argument("--nms-iou", type=float, default=0.5, help="NMS overlap threshold")
    p.add_argument("--score-floor", type=float, default=0.05,
                   help="drop detections below this score before association")
    p.add_argument("--nms-on-masks", action="store_true",
                   help="suppress by mask IoU instead of box IoU")


def _infer_videos(detections):
    """Video metadata implied by a detection file: length = max frame + 1."""
    videos = {}
    for vid, frames in detections.videos.items():
        if not frames:
            continue
        length = max(f.frame_index for f in frames) + 1
        size = None
        for f in frames:
            for d in f.detections:
                size = d.mask.size
                break
            if size:
                break
        if size is None:
            continue
        videos[vid] = VideoMeta(video_id=vid, width=size[1], height=size[0], length=length)
    return videos


def _track_one(method, frames, args):
    if method == "masktrack":
        return track_video(frames, _tracker_config_from_args(args))
    if method == "iou":
        return baselines.iou_tracker_plus(
            frames,
            min_iou=args.min_iou,
            config=_tracker_config_from_args(args),
        )
    return baselines.seq_tracker(
        frames,
        baselines.SeqConfig(min_track_length=args.min_track_length,
                            weights=_weights_from_args(args)),
    )


def _cmd_track(args) -> int:
    detections = load_detections(args.detections)
    videos = _infer_videos(detections)
    video_ids = sorted(detections.videos)

    def work(vid):
        return _track_one(args.method, detections.videos[vid], args)

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            per_video = list(pool.map(work, video_ids))
    else:
        per_video = [work(vid) for vid in video_ids]

    hypotheses = [t for tracks in per_video for t in tracks]
    save_results(hypotheses, videos, args.out)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    gt = load_ground_truth(args.gt)
    hypotheses = load_results(args.results, videos=gt.videos)
    report = evaluate(gt, hypotheses)
    print(report.format_table())
    if args.out:
        _atomic_write_text(args.out, _dump_canonical(report.to_dict()))
    return EXIT_OK


def _cmd_synth(args) -> int:
    data = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as f:
                data = json.load(f)
        except OSError as e:
            print(f"error: {args.config}: {e}", file=sys.stderr)
            return EXIT_INVALID
        except json.JSONDecodeError as e:
            print(f"error: {args.config}: invalid JSON: {e}", file=sys.stderr)
            return EXIT_INVALID
        if not isinstance(data, dict):
            print(f"error: {args.config}: config must be a JSON object", file=sys.stderr)
            return EXIT_INVALID
    if args.seed is not None:
        data["seed"] = args.seed
    config = synth.SynthConfig.from_dict(data)
    gt, dets = synth.generate(config)
    os.makedirs(args.out_dir, exist_ok=True)
    save_ground_truth(gt, os.path.join(args.out_dir, "gt.json"))
    save_detections(dets, os.path.join(args.out_dir, "detections.json"))
    return EXIT_OK


def _cmd_oracle(args) -> int:
    gt = load_ground_truth(args.gt)
    if args.mode == "image":
        hypotheses = synth.image_oracle(gt, weights=_weights_from_args(args))
    else:
        if not args.detections:
            raise _UsageError("oracle: --detections is required for --mode identity")
        detections = load_detections(args.detections)
        hypotheses = synth.identity_oracle(gt, detections)
    save_results(hypotheses, gt.videos, args.out)
    return EXIT_OK


def _cmd_ablate(args) -> int:
    gt = load_ground_truth(args.gt)
    detections = load_detections(args.detections)
    rows = ablation.run_ablation(gt, detections, base_weights=_weights_from_args(args))
    print(ablation.format_ablation_table(rows))
    if args.out:
        _atomic_write_text(args.out, _dump_canonical(ablation.rows_to_dict(rows)))
    return EXIT_OK


def _build_parser() -> _Parser:
    parser = _Parser(prog="vistrack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="score a results file against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--results", required=True)
    p.add_argument("--out", help="also write the report as JSON")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("track", help="link detections into instance tracks")
    p.add_argument("--detections", required=True)
    p.add_argument("--method", choices=("masktrack", "iou", "seq"), default="masktrack")
    _add_tracker_flags(p)
    p.add_argument("--min-iou", type=float, default=baselines.DEFAULT_MIN_IOU,
                   help="IoUTracker+ minimum overlap for linking")
    p.add_argument("--min-track-length", type=int, default=8,
                   help="SeqTracker halting length threshold")
    p.add_argument("--jobs", type=int, default=1, help="video-level parallelism")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_track)

    p = sub.add_parser("synth", help="generate a synthetic benchmark")
    p.add_argument("--config", help="JSON file of generator settings")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("oracle", help="run a ground-truth-assisted diagnostic")
    p.add_argument("--mode", choices=("image", "identity"), required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--detections")
    _add_weight_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("ablate", help="toggle cues on/off and compare AP")
    p.add_argument("--gt", required=True)
    p.add_argument("--detections", required=True)
    _add_weight_flags(p)
    p.add_argument("--out", help="also write the table as JSON")
    p.set_defaults(func=_cmd_ablate)

    return parser


def run(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return int(e.code or 0)
    try:
        return args.func(args)
    except _UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except VistrackError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
