import math

import numpy as np
import pytest

from vistrack.ablation import ALL_TOGGLES, format_ablation_table, rows_to_dict, run_ablation
from vistrack.assoc import CueWeights, combined_score, track_video
from vistrack.mask import Box
from vistrack.metrics import evaluate
from vistrack.synth import SynthConfig, generate

from helpers import make_detection


def small_case(seed=3):
    cfg = SynthConfig(num_videos=2, num_objects=3, num_categories=3,
                      box_jitter=1.5, feature_noise=0.3, seed=seed)
    return generate(cfg)


class TestRunAblation:
    def test_eight_rows_in_order(self):
        gt, dets = small_case()
        rows = run_ablation(gt, dets)
        assert [(r.det, r.iou, r.cat) for r in rows] == list(ALL_TOGGLES)

    def test_all_on_matches_direct_run(self):
        gt, dets = small_case()
        rows = run_ablation(gt, dets)
        full = rows[-1]
        assert (full.det, full.iou, full.cat) == (True, True, True)
        hypotheses = []
        for vid in sorted(dets.videos):
            hypotheses.extend(track_video(dets.videos[vid]))
        direct = evaluate(gt, hypotheses)
        assert full.report.mean_ap == direct.mean_ap
        assert full.report.ap50 == direct.ap50
        assert full.report.per_category_ap == direct.per_category_ap

    def test_category_cue_helps_when_overlap_confuses(self):
        # overlapping objects of distinct categories with noisy features:
        # every Cat-on row must do at least as well as its Cat-off sibling
        cfg = SynthConfig(num_videos=4, num_objects=2, num_categories=2,
                          allow_overlap=True, feature_noise=0.6, box_jitter=1.0,
                          seed=17)
        gt, dets = generate(cfg)
        rows = {(r.det, r.iou, r.cat): r.report.mean_ap for r in run_ablation(gt, dets)}
        for det in (False, True):
            for iou in (False, True):
                assert rows[(det, iou, True)] >= rows[(det, iou, False)] - 1e-12

    def test_custom_toggles(self):
        gt, dets = small_case()
        rows = run_ablation(gt, dets, toggles=[(True, True, True)])
        assert len(rows) == 1


class TestZeroWeightEquivalence:
    def test_zero_weight_equals_term_deletion(self):
        # scoring with a zero weight must equal scoring with the term removed
        rng = np.random.default_rng(53)
        from vistrack.assoc import MemoryEntry

        for _ in range(200):
            det = make_detection(int(rng.integers(0, 30)), int(rng.integers(0, 30)),
                                 8, 8, category=int(rng.integers(1, 3)),
                                 score=float(rng.uniform(0.05, 1.0)))
            entry = MemoryEntry(
                label=1,
                feature=np.ones(4),
                last_box=Box(float(rng.integers(0, 30)), float(rng.integers(0, 30)), 8.0, 8.0),
                category_id=int(rng.integers(1, 3)),
            )
            p = float(rng.uniform(0.01, 1.0))
            alpha, beta, gamma = rng.uniform(0.1, 5.0, size=3)

            def deleted(drop_det=False, drop_iou=False, drop_cat=False):
                v = math.log(p)
                if not drop_det:
                    v += alpha * math.log(det.score)
                if not drop_iou:
                    from vistrack.mask import box_iou

                    v += beta * box_iou(det.box, entry.last_box)
                if not drop_cat:
                    v += gamma * (1.0 if det.category_id == entry.category_id else 0.0)
                return v

            assert combined_score(p, det, entry, CueWeights(0.0, beta, gamma)) == deleted(drop_det=True)
            assert combined_score(p, det, entry, CueWeights(alpha, 0.0, gamma)) == deleted(drop_iou=True)
            assert combined_score(p, det, entry, CueWeights(alpha, beta, 0.0)) == deleted(drop_cat=True)


class TestFormatting:
    def test_table_contains_deltas(self):
        gt, dets = small_case()
        rows = run_ablation(gt, dets)
        table = format_ablation_table(rows)
        assert "Det" in table and "IoU" in table and "Cat" in table
        assert len(table.splitlines()) == 9

    def test_dict_deltas_reference_all_on(self):
        gt, dets = small_case()
        rows = run_ablation(gt, dets)
        doc = rows_to_dict(rows)
        full = doc["rows"][-1]
        assert full["delta_ap"] == 0.0
        for rec in doc["rows"]:
            assert rec["delta_ap"] == pytest.approx(rec["ap"] - full["ap"], abs=1e-12)
