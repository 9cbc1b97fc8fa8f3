# -*- coding: utf-8 -*-
"""
Scores detector predictions against an exported dataset split.

Boxes are ``(x, y, w, h)``. Detections are matched per image and class,
greedily in order of decreasing score, to the unmatched ground-truth box of
highest IoU (at least the IoU threshold). Average precision per class is
the mean of the interpolated precision at the 101 recall levels
``0, 0.01, ..., 1``; the mAP averages it over classes that have ground
truth.
"""

from dataclasses import dataclass, field
import json
import logging

import numpy as np

from lithosynth.dataset.export import CATEGORIES
from lithosynth.synthesis.annotate import decode_rle
from lithosynth.util.exceptions import (
    DatasetIOError,
    DegenerateBoxError,
    EmptyMaskError,
    InvalidConfigError,
    MalformedJsonError,
    MalformedRleError,
    UndefinedApError,
    UnknownCategoryError,
    UnknownImageIdError,
)
from lithosynth.util.helper import canonical_json

logger = logging.getLogger(__name__)

CATEGORY_NAMES = {cat["id"]: cat["name"] for cat in CATEGORIES}
RECALL_LEVELS = np.arange(101) / 100.0


@dataclass(frozen=True)
class EvaluateConfig:
    """
    Parameters
    ----------
    iou_threshold : float
        Minimum IoU of a true positive (default 0.5).
    score_threshold : float
        Score at which the TP/FP/FN counts are taken (default 0.5).
    """

    iou_threshold: float = 0.5
    score_threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.iou_threshold <= 1.0:
            raise InvalidConfigError(f"iou_threshold {self.iou_threshold} outside (0, 1]")
        if not 0.0 <= self.score_threshold <= 1.0:
            raise InvalidConfigError(f"score_threshold {self.score_threshold} outside [0, 1]")


@dataclass(frozen=True)
class Detection:
    """A predicted box with its class and confidence."""

    image_id: str
    category_id: int
    bbox: tuple
    score: float


@dataclass(frozen=True)
class MatchResult:
    """
    Outcome of matching one image and class.

    Attributes
    ----------
    order : list of int
        Indices of the detections, in matching order.
    is_tp : list of bool
        Whether each detection of `order` is a true positive.
    matched_gt : list of int or None
        Ground-truth index each detection of `order` matched.
    n_gt : int
    """

    order: list
    is_tp: list
    matched_gt: list
    n_gt: int

    @property
    def tp(self):
        return sum(self.is_tp)

    @property
    def fp(self):
        return len(self.is_tp) - self.tp

    @property
    def fn(self):
        return self.n_gt - self.tp


@dataclass
class EvalReport:
    """
    Attributes
    ----------
    per_class_ap : dict
        AP@0.5 of each class that has ground truth, by class name.
    map_50 : float or None
        Mean of `per_class_ap`; None if no class has ground truth.
    counts : dict
        ``{"tp", "fp", "fn"}`` per class at the reference score threshold.
    pr_curves : dict
        ``[recall, precision]`` points per class along the detection stream.
    absent_classes : list of str
        Classes without ground truth (excluded from the mAP).
    """

    per_class_ap: dict = field(default_factory=dict)
    map_50: float = None
    counts: dict = field(default_factory=dict)
    pr_curves: dict = field(default_factory=dict)
    absent_classes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "per_class_ap": dict(self.per_class_ap),
            "map_50": self.map_50,
            "counts": {k: dict(v) for k, v in self.counts.items()},
            "pr_curves": {k: [list(p) for p in v] for k, v in self.pr_curves.items()},
            "absent_classes": list(self.absent_classes),
        }

    @classmethod
    def from_dict(cls, record):
        return cls(
            per_class_ap=dict(record["per_class_ap"]),
            map_50=record["map_50"],
            counts={k: dict(v) for k, v in record["counts"].items()},
            pr_curves={k: [tuple(p) for p in v] for k, v in record["pr_curves"].items()},
            absent_classes=list(record["absent_classes"]),
        )


def _check_box(box):
    if box[2] <= 0 or box[3] <= 0:
        raise DegenerateBoxError(f"{tuple(box)}")


def iou(a, b):
    """
    Intersection over union of two ``(x, y, w, h)`` boxes.

    Raises
    ------
    DegenerateBoxError
        If a box has ``w <= 0`` or ``h <= 0``.
    """
    _check_box(a)
    _check_box(b)
    ix = max(0.0, min(a[0] + a[2], b[0] + b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[1] + a[3], b[1] + b[3]) - max(a[1], b[1]))
    intersection = ix * iy
    union = a[2] * a[3] + b[2] * b[3] - intersection
    return float(intersection / union)


def box_from_mask(mask):
    """Tight ``(x, y, w, h)`` box of a boolean mask."""
    rows, cols = np.nonzero(np.asarray(mask, dtype=bool))
    if rows.size == 0:
        raise EmptyMaskError()
    x0, y0 = int(cols.min()), int(rows.min())
    return (x0, y0, int(cols.max()) - x0 + 1, int(rows.max()) - y0 + 1)


def boxes_from_masks(instances):
    """
    Tight boxes of a list of masks.

    Parameters
    ----------
    instances : list
        :class:`AnnotationInstance` objects, RLE dicts or boolean arrays.

    Returns
    -------
    list of tuple
        One ``(x, y, w, h)`` per instance.

    Raises
    ------
    EmptyMaskError
        If a mask has no foreground pixel.
    """
    boxes = []
    for instance in instances:
        if hasattr(instance, "mask_array"):
            mask = instance.mask_array()
        elif isinstance(instance, dict):
            mask = decode_rle(instance)
        else:
            mask = instance
        boxes.append(box_from_mask(mask))
    return boxes


def match_detections(gts, dets, iou_thr=0.5):
    """
    Greedy matching of one image's detections of one class.

    Parameters
    ----------
    gts : list of tuple
        Ground-truth boxes.
    dets : list of (tuple, float)
        ``(box, score)`` pairs. Equal scores keep their input order.
    iou_thr : float, optional

    Returns
    -------
    MatchResult
    """
    order = sorted(range(len(dets)), key=lambda ii: -dets[ii][1])
    taken = [False] * len(gts)
    is_tp, matched = [], []
    for ii in order:
        box = dets[ii][0]
        best, best_iou = None, iou_thr
        for jj, gt in enumerate(gts):
            if taken[jj]:
                continue
            overlap = iou(box, gt)
            if overlap >= best_iou and (best is None or overlap > best_iou):
                best, best_iou = jj, overlap
        if best is None:
            is_tp.append(False)
            matched.append(None)
        else:
            taken[best] = True
            is_tp.append(True)
            matched.append(best)
    return MatchResult(order=order, is_tp=is_tp, matched_gt=matched, n_gt=len(gts))


def precision_recall(is_tp, n_gt):
    """Cumulative precision and recall along a score-sorted stream."""
    flags = np.asarray(is_tp, dtype=bool)
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    recall = tp / n_gt
    precision = tp / np.maximum(tp + fp, 1)
    return precision, recall


def average_precision(is_tp, n_gt):
    """
    101-point interpolated average precision of one class.

    Parameters
    ----------
    is_tp : list of bool
        True-positive flags of the class's detections over all images,
        sorted by decreasing score.
    n_gt : int
        Ground-truth instances of the class.

    Returns
    -------
    float
        AP in [0, 1].

    Raises
    ------
    UndefinedApError
        If `n_gt` is 0.
    """
    if n_gt <= 0:
        raise UndefinedApError()
    if len(is_tp) == 0:
        return 0.0
    precision, recall = precision_recall(is_tp, n_gt)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    index = np.searchsorted(recall, RECALL_LEVELS, side="left")
    sampled = np.where(index < len(envelope), envelope[np.minimum(index, len(envelope) - 1)], 0.0)
    return float(np.mean(sampled))


# files


def _load_json(path):
    try:
        with open(path) as handle:
            return json.load(handle)
    except json.JSONDecodeError as err:
        raise MalformedJsonError(
            f"{path}:{err.lineno}: {err.msg}", path=str(path), line=err.lineno
        ) from err
    except OSError as err:
        raise DatasetIOError(f"cannot read {path}: {err}") from err


def load_ground_truth(path):
    """
    Reads a split file into ``(image_ids, {(image_id, category_id): [box]})``.
    """
    document = _load_json(path)
    try:
        image_ids = [str(image["id"]) for image in document["images"]]
        boxes = {}
        for ann in document["annotations"]:
            key = (str(ann["image_id"]), int(ann["category_id"]))
            boxes.setdefault(key, []).append(tuple(float(v) for v in ann["bbox"]))
    except (KeyError, TypeError, ValueError) as err:
        raise MalformedJsonError(f"{path}: {err}", path=str(path)) from err
    return image_ids, boxes


def load_detections(path, image_ids):
    """
    Reads and validates a prediction file.

    Predicted masks, when present and no box is given, are turned into
    their tight boxes.

    Raises
    ------
    MalformedJsonError
        If the file is not a list of valid detection records.
    UnknownImageIdError, UnknownCategoryError
        If a detection refers to an image or category that does not exist.
    """
    document = _load_json(path)
    if not isinstance(document, list):
        raise MalformedJsonError(f"{path}: expected a list of detections", path=str(path))
    known = set(image_ids)
    detections = []
    for index, entry in enumerate(document):
        where = f"{path}[{index}]"
        try:
            image_id = str(entry["image_id"])
            category_id = int(entry["category_id"])
            score = float(entry["score"])
            if "bbox" in entry:
                bbox = tuple(float(v) for v in entry["bbox"])
            else:
                bbox = tuple(float(v) for v in boxes_from_masks([entry["segmentation"]])[0])
        except (KeyError, TypeError, ValueError, MalformedRleError) as err:
            raise MalformedJsonError(f"{where}: {err}", path=str(path), index=index) from err
        if image_id not in known:
            raise UnknownImageIdError(f"{where}: {image_id}", path=str(path), index=index)
        if category_id not in CATEGORY_NAMES:
            raise UnknownCategoryError(f"{where}: {category_id}", path=str(path), index=index)
        if len(bbox) != 4 or not 0.0 <= score <= 1.0:
            raise MalformedJsonError(f"{where}: bad bbox or score", path=str(path), index=index)
        _check_box(bbox)
        detections.append(Detection(image_id, category_id, bbox, score))
    return detections


def evaluate_detections(image_ids, gt_boxes, detections, cfg=None):
    """
    Evaluates in-memory ground truth and detections.

    Parameters
    ----------
    image_ids : list of str
    gt_boxes : dict
        ``{(image_id, category_id): [box, ...]}``.
    detections : list of Detection
    cfg : EvaluateConfig or None, optional

    Returns
    -------
    EvalReport
    """
    cfg = EvaluateConfig() if cfg is None else cfg
    report = EvalReport()
    by_key = {}
    for order, det in enumerate(detections):
        by_key.setdefault((det.image_id, det.category_id), []).append((order, det))
    for category_id, name in sorted(CATEGORY_NAMES.items()):
        n_gt = sum(len(gt_boxes.get((image_id, category_id), ())) for image_id in image_ids)
        if n_gt == 0:
            report.absent_classes.append(name)
            continue
        stream = []
        counts = {"tp": 0, "fp": 0, "fn": 0}
        for image_id in image_ids:
            gts = gt_boxes.get((image_id, category_id), [])
            dets = by_key.get((image_id, category_id), [])
            result = match_detections(gts, [(d.bbox, d.score) for _, d in dets], cfg.iou_threshold)
            for position, ii in enumerate(result.order):
                order, det = dets[ii]
                stream.append((-det.score, order, result.is_tp[position]))
            kept = [(d.bbox, d.score) for _, d in dets if d.score >= cfg.score_threshold]
            at_threshold = match_detections(gts, kept, cfg.iou_threshold)
            counts["tp"] += at_threshold.tp
            counts["fp"] += at_threshold.fp
            counts["fn"] += at_threshold.fn
        stream.sort(key=lambda item: (item[0], item[1]))
        is_tp = [item[2] for item in stream]
        report.per_class_ap[name] = average_precision(is_tp, n_gt)
        report.counts[name] = counts
        if is_tp:
            precision, recall = precision_recall(is_tp, n_gt)
            report.pr_curves[name] = [(float(r), float(p)) for r, p in zip(recall, precision)]
        else:
            report.pr_curves[name] = []
    if report.per_class_ap:
        report.map_50 = float(np.mean(list(report.per_class_ap.values())))
    return report


def evaluate(gt_file, pred_file, cfg=None, report_path=None, table_path=None):
    """
    Scores a prediction file against a ground-truth split file.

    Parameters
    ----------
    gt_file : str
        A split JSON written by :func:`lithosynth.dataset.export.export_coco`.
    pred_file : str
        JSON list of ``{image_id, category_id, bbox, score}`` records, with
        an optional ``segmentation`` RLE.
    cfg : EvaluateConfig or None, optional
    report_path, table_path : str or None, optional
        Where to write the JSON report and the text table.

    Returns
    -------
    EvalReport
    """
    image_ids, gt_boxes = load_ground_truth(gt_file)
    detections = load_detections(pred_file, image_ids)
    report = evaluate_detections(image_ids, gt_boxes, detections, cfg)
    logger.info("evaluated %d detections on %d images", len(detections), len(image_ids))
    if report_path is not None:
        with open(report_path, "w") as handle:
            handle.write(canonical_json(report.to_dict(), indent=2) + "\n")
    if table_path is not None:
        with open(table_path, "w") as handle:
            handle.write(format_report_table(report))
    return report


def compare_reports(baseline, candidate):
    """
    Per-class relative AP gain of `candidate` over `baseline`.

    Returns
    -------
    dict
        Per class present in both reports, plus ``"mAP"``:
        ``{"baseline", "candidate", "relative_gain"}``; the gain is None
        when the baseline AP is 0.
    """
    comparison = {}
    pairs = [
        (name, baseline.per_class_ap[name], candidate.per_class_ap[name])
        for name in baseline.per_class_ap if name in candidate.per_class_ap
    ]
    if baseline.map_50 is not None and candidate.map_50 is not None:
        pairs.append(("mAP", baseline.map_50, candidate.map_50))
    for name, before, after in pairs:
        gain = None if before == 0 else (after - before) / before
        comparison[name] = {"baseline": before, "candidate": after, "relative_gain": gain}
    return comparison


def format_report_table(report, label="model"):
    """Fixed-width table: one row, AP@0.5 per class then mAP@0.5."""
    names = [CATEGORY_NAMES[cat_id] for cat_id in sorted(CATEGORY_NAMES)]
    header = f"{'':<12}" + "".join(f"{name:>15}" for name in names) + f"{'mAP@0.5':>10}"
    cells = []
    for name in names:
        ap = report.per_class_ap.get(name)
        cells.append(f"{'-' if ap is None else f'{ap:.3f}':>15}")
    map_cell = "-" if report.map_50 is None else f"{report.map_50:.3f}"
    row = f"{label:<12}" + "".join(cells) + f"{map_cell:>10}"
    return header + "\n" + row + "\n"
