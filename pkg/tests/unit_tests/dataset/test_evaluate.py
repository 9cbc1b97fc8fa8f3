# -*- coding: utf-8 -*-
"""
Tests for box matching, average precision and detector evaluation.
"""

import json
import os
import tempfile
import unittest

import numpy as np

from lithosynth.dataset.evaluate import (
    Detection,
    EvalReport,
    EvaluateConfig,
    average_precision,
    box_from_mask,
    boxes_from_masks,
    compare_reports,
    evaluate,
    evaluate_detections,
    format_report_table,
    iou,
    load_detections,
    match_detections,
)
from lithosynth.dataset.export import DatasetManifest, ImageEntry, export_coco
from lithosynth.geometry.topology import DefectClass
from lithosynth.synthesis.annotate import AnnotationInstance, encode_rle
from lithosynth.util.exceptions import (
    DegenerateBoxError,
    EmptyMaskError,
    InvalidConfigError,
    MalformedJsonError,
    UndefinedApError,
    UnknownCategoryError,
    UnknownImageIdError,
)


def oracle_ap(image_ids, gt_boxes, detections, category_id, iou_thr=0.5):
    """Per-class AP computed from an IoU matrix per image and an explicit 101-point loop."""
    stream = []
    n_gt = 0
    for image_id in image_ids:
        gts = gt_boxes.get((image_id, category_id), [])
        n_gt += len(gts)
        dets = [
            (index, d) for index, d in enumerate(detections)
            if d.image_id == image_id and d.category_id == category_id
        ]
        dets.sort(key=lambda item: (-item[1].score, item[0]))
        free = np.ones(len(gts), dtype=bool)
        for index, det in dets:
            overlaps = np.array([iou(det.bbox, gt) for gt in gts]) if gts else np.zeros(0)
            overlaps = np.where(free, overlaps, -1.0)
            hit = overlaps.size > 0 and overlaps.max() >= iou_thr
            if hit:
                free[int(np.argmax(overlaps))] = False
            stream.append((det.score, index, hit))
    if n_gt == 0:
        return None
    stream.sort(key=lambda item: (-item[0], item[1]))
    points = []
    tp = fp = 0
    for _, _, hit in stream:
        tp += hit
        fp += not hit
        points.append((tp / n_gt, tp / (tp + fp)))
    total = 0.0
    for k in range(101):
        level = k / 100.0
        total += max((p for r, p in points if r >= level), default=0.0)
    return total / 101


def random_fixture(rng, n_images=20):
    image_ids = [f"img{ii:02d}" for ii in range(n_images)]
    gt_boxes, detections = {}, []
    for image_id in image_ids:
        for category_id in (1, 2, 3):
            boxes = []
            for _ in range(int(rng.integers(0, 4))):
                x, y = rng.uniform(0, 200, size=2)
                w, h = rng.uniform(5, 40, size=2)
                boxes.append((x, y, w, h))
                if rng.random() < 0.8:
                    jitter = rng.normal(0, 4, size=4)
                    detections.append(Detection(
                        image_id, category_id,
                        (x + jitter[0], y + jitter[1], max(w + jitter[2], 1.0), max(h + jitter[3], 1.0)),
                        float(rng.random()),
                    ))
            if boxes:
                gt_boxes[(image_id, category_id)] = boxes
            for _ in range(int(rng.integers(0, 3))):
                x, y = rng.uniform(0, 200, size=2)
                detections.append(Detection(
                    image_id, category_id, (x, y, 20.0, 20.0), float(rng.random())
                ))
    return image_ids, gt_boxes, detections


def write_split(tmp):
    mask = np.zeros((32, 32), dtype=bool)
    mask[4:8, 10:16] = True
    manifest = DatasetManifest(
        images=[ImageEntry("a", "images/a.pgm", 32, 32, "A", "test")],
        annotations=[
            AnnotationInstance(1, "a", DefectClass.PINCH, encode_rle(mask), (10, 4, 6, 4), 24)
        ],
        split_ratios=(0.0, 0.0, 1.0),
    )
    export_coco(manifest, tmp)
    return os.path.join(tmp, "test.json"), mask


def write_json(tmp, name, payload):
    path = os.path.join(tmp, name)
    with open(path, "w") as handle:
        if isinstance(payload, str):
            handle.write(payload)
        else:
            json.dump(payload, handle)
    return path


class Test_iou(unittest.TestCase):
    def test_half_overlap(self):
        self.assertAlmostEqual(iou((0, 0, 2, 2), (1, 0, 2, 2)), 1.0 / 3.0)

    def test_identical_and_disjoint(self):
        self.assertEqual(iou((3, 4, 5, 6), (3, 4, 5, 6)), 1.0)
        self.assertEqual(iou((0, 0, 2, 2), (5, 5, 2, 2)), 0.0)

    def test_touching_edges(self):
        self.assertEqual(iou((0, 0, 2, 2), (2, 0, 2, 2)), 0.0)

    def test_degenerate(self):
        with self.assertRaises(DegenerateBoxError):
            iou((0, 0, 0, 2), (0, 0, 2, 2))
        with self.assertRaises(DegenerateBoxError):
            iou((0, 0, 2, 2), (0, 0, 2, -1))


class Test_box_from_mask(unittest.TestCase):
    def test_tight(self):
        mask = np.zeros((10, 10), dtype=bool)
        mask[2, 3] = mask[6, 7] = True
        self.assertEqual(box_from_mask(mask), (3, 2, 5, 5))

    def test_empty(self):
        with self.assertRaises(EmptyMaskError):
            box_from_mask(np.zeros((4, 4), dtype=bool))

    def test_accepts_rle_and_arrays(self):
        mask = np.zeros((8, 8), dtype=bool)
        mask[1:3, 4:8] = True
        self.assertEqual(boxes_from_masks([mask, encode_rle(mask)]), [(4, 1, 4, 2)] * 2)


class Test_match_detections(unittest.TestCase):
    def test_highest_score_claims_ground_truth(self):
        gts = [(0, 0, 10, 10)]
        dets = [((1, 1, 10, 10), 0.3), ((0, 0, 10, 10), 0.9)]
        result = match_detections(gts, dets)
        self.assertEqual(result.order, [1, 0])
        self.assertEqual(result.is_tp, [True, False])
        self.assertEqual(result.matched_gt, [0, None])
        self.assertEqual((result.tp, result.fp, result.fn), (1, 1, 0))

    def test_picks_best_overlap(self):
        gts = [(0, 0, 10, 10), (2, 0, 10, 10)]
        result = match_detections(gts, [((2, 0, 10, 10), 0.5)])
        self.assertEqual(result.matched_gt, [1])

    def test_below_threshold(self):
        result = match_detections([(0, 0, 2, 2)], [((1, 0, 2, 2), 0.9)])
        self.assertEqual(result.is_tp, [False])
        self.assertEqual(result.fn, 1)
        self.assertEqual(match_detections([(0, 0, 2, 2)], [((1, 0, 2, 2), 0.9)], 0.3).is_tp, [True])

    def test_equal_scores_keep_input_order(self):
        dets = [((0, 0, 4, 4), 0.5), ((0, 0, 4, 4), 0.5)]
        result = match_detections([(0, 0, 4, 4)], dets)
        self.assertEqual(result.order, [0, 1])
        self.assertEqual(result.is_tp, [True, False])

    def test_no_ground_truth(self):
        result = match_detections([], [((0, 0, 4, 4), 0.5)])
        self.assertEqual(result.fp, 1)


class Test_average_precision(unittest.TestCase):
    def test_worked_example(self):
        self.assertAlmostEqual(average_precision([True, False, True], 2), 0.8350, places=4)
        self.assertAlmostEqual(
            average_precision([True, False, True], 2), (51 + 50 * 2 / 3) / 101, places=12
        )

    def test_perfect(self):
        self.assertEqual(average_precision([True] * 5, 5), 1.0)

    def test_partial_recall(self):
        # recall never goes past 0.5
        self.assertAlmostEqual(average_precision([True], 2), 51 / 101)

    def test_no_detections(self):
        self.assertEqual(average_precision([], 3), 0.0)

    def test_all_false(self):
        self.assertEqual(average_precision([False, False], 3), 0.0)

    def test_undefined(self):
        with self.assertRaises(UndefinedApError):
            average_precision([True], 0)


class Test_evaluate_detections(unittest.TestCase):
    def test_matches_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            image_ids, gt_boxes, detections = random_fixture(rng)
            report = evaluate_detections(image_ids, gt_boxes, detections)
            for category_id, name in ((1, "bridge"), (2, "burr"), (3, "pinch")):
                expected = oracle_ap(image_ids, gt_boxes, detections, category_id)
                if expected is None:
                    self.assertNotIn(name, report.per_class_ap)
                else:
                    self.assertAlmostEqual(report.per_class_ap[name], expected, places=9)
            self.assertIn("contamination", report.absent_classes)

    def test_self_evaluation(self):
        rng = np.random.default_rng(1)
        image_ids, gt_boxes, _ = random_fixture(rng)
        detections = [
            Detection(image_id, category_id, box, 1.0)
            for (image_id, category_id), boxes in gt_boxes.items() for box in boxes
        ]
        report = evaluate_detections(image_ids, gt_boxes, detections)
        self.assertEqual(report.map_50, 1.0)
        for counts in report.counts.values():
            self.assertEqual(counts["fp"], 0)
            self.assertEqual(counts["fn"], 0)

    def test_empty_predictions(self):
        gt_boxes = {("a", 1): [(0, 0, 4, 4)], ("a", 3): [(5, 5, 4, 4)]}
        report = evaluate_detections(["a"], gt_boxes, [])
        self.assertEqual(report.per_class_ap, {"bridge": 0.0, "pinch": 0.0})
        self.assertEqual(report.map_50, 0.0)
        self.assertEqual(report.absent_classes, ["burr", "contamination"])
        self.assertEqual(report.counts["bridge"], {"tp": 0, "fp": 0, "fn": 1})
        self.assertEqual(report.pr_curves["bridge"], [])

    def test_no_ground_truth_at_all(self):
        report = evaluate_detections(["a"], {}, [Detection("a", 1, (0, 0, 2, 2), 0.9)])
        self.assertIsNone(report.map_50)
        self.assertEqual(len(report.absent_classes), 4)

    def test_classes_do_not_cross_match(self):
        gt_boxes = {("a", 1): [(0, 0, 4, 4)]}
        report = evaluate_detections(["a"], gt_boxes, [Detection("a", 2, (0, 0, 4, 4), 0.9)])
        self.assertEqual(report.per_class_ap["bridge"], 0.0)

    def test_counts_use_score_threshold(self):
        gt_boxes = {("a", 1): [(0, 0, 4, 4)]}
        detections = [Detection("a", 1, (0, 0, 4, 4), 0.4)]
        report = evaluate_detections(["a"], gt_boxes, detections)
        self.assertEqual(report.per_class_ap["bridge"], 1.0)
        self.assertEqual(report.counts["bridge"], {"tp": 0, "fp": 0, "fn": 1})
        relaxed = evaluate_detections(["a"], gt_boxes, detections, EvaluateConfig(score_threshold=0.3))
        self.assertEqual(relaxed.counts["bridge"], {"tp": 1, "fp": 0, "fn": 0})

    def test_bad_config(self):
        with self.assertRaises(InvalidConfigError):
            EvaluateConfig(iou_threshold=0.0)
        with self.assertRaises(InvalidConfigError):
            EvaluateConfig(score_threshold=1.5)


class Test_load_detections(unittest.TestCase):
    def test_segmentation_only(self):
        mask = np.zeros((16, 16), dtype=bool)
        mask[3:5, 6:9] = True
        with tempfile.TemporaryDirectory() as tmp:
            path = write_json(tmp, "p.json", [
                {"image_id": "a", "category_id": 3, "segmentation": encode_rle(mask), "score": 0.7}
            ])
            (det,) = load_detections(path, ["a"])
        self.assertEqual(det.bbox, (6.0, 3.0, 3.0, 2.0))
        self.assertEqual(det.score, 0.7)

    def test_errors(self):
        good = {"image_id": "a", "category_id": 1, "bbox": [0, 0, 2, 2], "score": 0.5}
        cases = [
            ("{not json", MalformedJsonError),
            ({"image_id": "a"}, MalformedJsonError),
            ([{"image_id": "a", "category_id": 1, "score": 0.5}], MalformedJsonError),
            ([dict(good, score=1.5)], MalformedJsonError),
            ([dict(good, bbox=[0, 0, 2])], MalformedJsonError),
            ([dict(good, image_id="zz")], UnknownImageIdError),
            ([dict(good, category_id=9)], UnknownCategoryError),
            ([dict(good, bbox=[0, 0, 0, 2])], DegenerateBoxError),
        ]
        with tempfile.TemporaryDirectory() as tmp:
            for payload, error in cases:
                path = write_json(tmp, "p.json", payload)
                with self.assertRaises(error):
                    load_detections(path, ["a"])

    def test_error_carries_index(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_json(tmp, "p.json", [
                {"image_id": "a", "category_id": 1, "bbox": [0, 0, 2, 2], "score": 0.5},
                {"image_id": "b", "category_id": 1, "bbox": [0, 0, 2, 2], "score": 0.5},
            ])
            with self.assertRaises(UnknownImageIdError) as ctx:
                load_detections(path, ["a"])
        self.assertEqual(ctx.exception.errpacket()["index"], 1)


class Test_evaluate(unittest.TestCase):
    def test_end_to_end(self):
        with tempfile.TemporaryDirectory() as tmp:
            gt_path, _ = write_split(tmp)
            pred_path = write_json(tmp, "p.json", [
                {"image_id": "a", "category_id": 3, "bbox": [10, 4, 6, 4], "score": 0.9},
                {"image_id": "a", "category_id": 1, "bbox": [0, 0, 3, 3], "score": 0.8},
            ])
            report_path = os.path.join(tmp, "report.json")
            table_path = os.path.join(tmp, "table.txt")
            report = evaluate(gt_path, pred_path, report_path=report_path, table_path=table_path)
            self.assertEqual(report.per_class_ap, {"pinch": 1.0})
            self.assertEqual(report.map_50, 1.0)
            with open(report_path) as handle:
                self.assertEqual(EvalReport.from_dict(json.load(handle)), report)
            with open(table_path) as handle:
                self.assertIn("1.000", handle.read())

    def test_predicted_mask_matches(self):
        with tempfile.TemporaryDirectory() as tmp:
            gt_path, mask = write_split(tmp)
            pred_path = write_json(tmp, "p.json", [
                {"image_id": "a", "category_id": 3, "segmentation": encode_rle(mask), "score": 0.6}
            ])
            self.assertEqual(evaluate(gt_path, pred_path).map_50, 1.0)


class Test_compare_reports(unittest.TestCase):
    def test_relative_gain(self):
        baseline = EvalReport(per_class_ap={"bridge": 0.5, "pinch": 0.0}, map_50=0.25)
        candidate = EvalReport(per_class_ap={"bridge": 0.6, "pinch": 0.4, "burr": 0.9}, map_50=0.5)
        comparison = compare_reports(baseline, candidate)
        self.assertEqual(set(comparison), {"bridge", "pinch", "mAP"})
        self.assertAlmostEqual(comparison["bridge"]["relative_gain"], 0.2)
        self.assertIsNone(comparison["pinch"]["relative_gain"])
        self.assertAlmostEqual(comparison["mAP"]["relative_gain"], 1.0)


class Test_format_report_table(unittest.TestCase):
    def test_layout(self):
        report = EvalReport(per_class_ap={"bridge": 0.5, "pinch": 0.25}, map_50=0.375)
        header, row = format_report_table(report, label="yolo").splitlines()
        self.assertEqual(header.split(), ["bridge", "burr", "pinch", "contamination", "mAP@0.5"])
        self.assertEqual(row.split(), ["yolo", "0.500", "-", "0.250", "-", "0.375"])


if __name__ == "__main__":
    unittest.main()
