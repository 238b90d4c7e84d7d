"""Cue ablation harness: toggle the Det / IoU / Cat terms and compare AP.

Each row zeroes a subset of the cue weights (off means weight 0, which is
equivalent to deleting the term from the assignment score), re-runs the
online tracker on every video, and evaluates. Rows are independent and
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

from .assoc import CueWeights, TrackerConfig, track_video
from .metrics import EvalConfig, EvalReport, evaluate

ALL_TOGGLES = (
    (False, False, False),
    (True, False, False),
    (False, True, False),
    (True, True, False),
    (False, False, True),
    (True, False, True),
    (False, True, True),
    (True, True, True),
)


@dataclass
class AblationRow:
    det: bool
    iou: bool
    cat: bool
    report: EvalReport


def run_ablation(gt, detections, base_weights: CueWeights | None = None, toggles=None,
                 tracker_config: TrackerConfig | None = None,
                 eval_config: EvalConfig | None = None):
    """Evaluate the tracker once per cue on/off combination.

    ``toggles`` is a sequence of (det, iou, cat) booleans; by default all
    eight combinations in the conventional row order. Returns AblationRows
    in that order.
    """
    if base_weights is None:
        base_weights = CueWeights()
    if toggles is None:
        toggles = ALL_TOGGLES
    base_cfg = tracker_config if tracker_config is not None else TrackerConfig()
    rows = []
    for det, iou, cat in toggles:
        weights = CueWeights(
            alpha=base_weights.alpha if det else 0.0,
            beta=base_weights.beta if iou else 0.0,
            gamma=base_weights.gamma if cat else 0.0,
        )
        cfg = TrackerConfig(
            weights=weights,
            nms_iou=base_cfg.nms_iou,
            score_floor=base_cfg.score_floor,
            nms_on_masks=base_cfg.nms_on_masks,
        )
        hypotheses = []
        for video_id in sorted(detections.videos):
            hypotheses.extend(track_video(detections.videos[video_id], cfg))
        rows.append(
            AblationRow(det=det, iou=iou, cat=cat, report=evaluate(gt, hypotheses, eval_config))
        )
    return rows


def _mark(flag) -> str:
    return "on " if flag else "off"


def rows_to_dict(rows) -> dict:
    """JSON form with per-row AP figures and deltas against the all-on row."""
    full = next((r for r in rows if r.det and r.iou and r.cat), None)
    out = []
    for r in rows:
        rec = {
            "det": r.det,
            "iou": r.iou,
            "cat": r.cat,
            "ap": r.report.mean_ap,
            "ap50": r.report.ap50,
            "ap75": r.report.ap75,
        }
        if full is not None:
            rec["delta_ap"] = r.report.mean_ap - full.report.mean_ap
            rec["delta_ap50"] = r.report.ap50 - full.report.ap50
            rec["delta_ap75"] = r.report.ap75 - full.report.ap75
        out.append(rec)
    return {"rows": out}


def format_ablation_table(rows) -> str:
    """Aligned text table with parenthesized deltas against the all-on row."""
    full = next((r for r in rows if r.det and r.iou and r.cat), None)

    def cell(value, reference):
        if full is None or reference is None:
            return f"{value:.4f}"
        delta = value - reference
        if abs(delta) < 5e-5:
            return f"{value:.4f}"
        return f"{value:.4f} ({delta:+.4f})"

    header = ["Det", "IoU", "Cat", "AP", "AP50", "AP75"]
    body = []
    for r in rows:
        ref = full.report if full is not None and r is not full else None
        body.append(
            [
                _mark(r.det),
                _mark(r.iou),
                _mark(r.cat),
                cell(r.report.mean_ap, ref.mean_ap if ref else None),
                cell(r.report.ap50, ref.ap50 if ref else None),
                cell(r.report.ap75, ref.ap75 if ref else None),
            ]
        )
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    for row in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines)
