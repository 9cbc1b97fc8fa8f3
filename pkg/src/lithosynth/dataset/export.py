# -*- coding: utf-8 -*-
"""
Dataset assembly: design-exclusive splits, COCO-style export and statistics.

All images derived from one base layout land in the same split. Category
ids are fixed (1 bridge, 2 burr, 3 pinch, 4 contamination) across every
export; contamination is reserved and never produced by the generator.
"""

from collections import Counter, OrderedDict
import csv
from dataclasses import asdict, dataclass, field
import io
import json
import logging
import math
import os
import shutil

import numpy as np

from lithosynth.geometry.topology import DefectClass
from lithosynth.synthesis.annotate import AnnotationInstance, decode_rle
from lithosynth.util.exceptions import (
    DatasetIOError,
    InsufficientLayoutsError,
    InvalidConfigError,
    SchemaViolationError,
)
from lithosynth.util.helper import canonical_json

logger = logging.getLogger(__name__)

DATASET_FORMAT_VERSION = 1
SPLITS = ("train", "val", "test")
CATEGORIES = (
    {"id": 1, "name": "bridge"},
    {"id": 2, "name": "burr"},
    {"id": 3, "name": "pinch"},
    {"id": 4, "name": "contamination"},
)
CATEGORY_IDS = {
    DefectClass.BRIDGE: 1,
    DefectClass.BURR: 2,
    DefectClass.PINCH: 3,
    DefectClass.CONTAMINATION: 4,
}
CATEGORY_CLASSES = {cat_id: cls for cls, cat_id in CATEGORY_IDS.items()}
RATIO_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ImageEntry:
    """One defect image of the dataset, a render of one perturbed layout."""

    id: str
    file_name: str
    width: int
    height: int
    base_layout_id: str
    split: str
    session: str = ""


@dataclass
class DatasetManifest:
    """
    Images, annotations and split metadata of a dataset.

    Attributes
    ----------
    images : list of ImageEntry
    annotations : list of AnnotationInstance
    split_ratios : tuple of float
    config_hash : str
        Hash of the pipeline config that produced the dataset.
    """

    images: list = field(default_factory=list)
    annotations: list = field(default_factory=list)
    split_ratios: tuple = (0.8, 0.1, 0.1)
    config_hash: str = ""

    def for_split(self, split):
        """The part of the manifest that belongs to `split`."""
        images = [image for image in self.images if image.split == split]
        ids = {image.id for image in images}
        return DatasetManifest(
            images=images,
            annotations=[ann for ann in self.annotations if ann.image_id in ids],
            split_ratios=tuple(self.split_ratios),
            config_hash=self.config_hash,
        )


def check_ratios(ratios):
    """Validates split ratios and returns them as a tuple of floats."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != len(SPLITS):
        raise InvalidConfigError(f"need {len(SPLITS)} split ratios, got {len(ratios)}")
    if min(ratios) < 0 or abs(sum(ratios) - 1.0) > RATIO_TOLERANCE:
        raise InvalidConfigError(f"split ratios {ratios} must be >= 0 and sum to 1")
    return ratios


def split_dataset(records, ratios=(0.8, 0.1, 0.1), seed=0, layout_ids=None):
    """
    Assigns whole base layouts to train/val/test.

    Layouts are taken largest first (ties in a seeded random order); each
    goes to the split whose image count lags its target the most. If a split
    with a positive ratio ends up empty, it takes the smallest layout of the
    split holding the most layouts.

    Parameters
    ----------
    records : list of DefectRecord
        Images are counted per ``base_layout_id``.
    ratios : tuple of float, optional
        Target image fractions of (train, val, test); must sum to 1.
    seed : int, optional
    layout_ids : iterable of str or None, optional
        Extra layouts to assign even if they have no records.

    Returns
    -------
    dict
        Maps layout id to split name.

    Raises
    ------
    InsufficientLayoutsError
        If there are fewer layouts than splits with a positive ratio.
    """
    ratios = check_ratios(ratios)
    counts = Counter(record.base_layout_id for record in records)
    for layout_id in layout_ids or ():
        counts.setdefault(layout_id, 0)
    active = [ii for ii, ratio in enumerate(ratios) if ratio > 0]
    if len(counts) < len(active):
        raise InsufficientLayoutsError(
            f"{len(counts)} layouts for {len(active)} non-empty splits"
        )
    ids = sorted(counts)
    rng = np.random.default_rng(seed)
    shuffled = [ids[ii] for ii in rng.permutation(len(ids))]
    ordered = sorted(shuffled, key=lambda layout_id: -counts[layout_id])
    total = sum(counts.values())
    assigned = [0.0] * len(SPLITS)
    members = [[] for _ in SPLITS]
    for layout_id in ordered:
        deficits = [ratios[ii] * total - assigned[ii] for ii in active]
        chosen = active[int(np.argmax(deficits))]
        members[chosen].append(layout_id)
        assigned[chosen] += counts[layout_id]
    for ii in active:
        if members[ii]:
            continue
        donor = max(
            (jj for jj in range(len(SPLITS)) if len(members[jj]) > 1),
            key=lambda jj: len(members[jj]),
        )
        smallest = min(members[donor], key=lambda layout_id: counts[layout_id])
        members[donor].remove(smallest)
        members[ii].append(smallest)
    assignment = {}
    for ii, split in enumerate(SPLITS):
        for layout_id in members[ii]:
            assignment[layout_id] = split
        logger.info(
            "%s: %d layouts, %d images", split, len(members[ii]),
            sum(counts[layout_id] for layout_id in members[ii]),
        )
    return assignment


def validate_manifest(manifest, check_masks=False):
    """
    Checks the invariants of a manifest.

    Image ids are unique and every image has a known split; all images of a
    base layout share a split; every annotation refers to an existing image
    and a known category, has a positive area and a unique id. With
    `check_masks`, each bbox and area are also checked against the decoded
    mask.

    Raises
    ------
    SchemaViolationError
    """
    images = {}
    layout_split = {}
    for image in manifest.images:
        if image.id in images:
            raise SchemaViolationError(f"duplicate image id {image.id}")
        if image.split not in SPLITS:
            raise SchemaViolationError(f"{image.id}: unknown split {image.split!r}")
        previous = layout_split.setdefault(image.base_layout_id, image.split)
        if previous != image.split:
            raise SchemaViolationError(
                f"layout {image.base_layout_id} in both {previous} and {image.split}"
            )
        images[image.id] = image
    seen = set()
    for ann in manifest.annotations:
        if ann.instance_id in seen:
            raise SchemaViolationError(f"duplicate annotation id {ann.instance_id}")
        seen.add(ann.instance_id)
        if ann.image_id not in images:
            raise SchemaViolationError(f"annotation {ann.instance_id}: unknown image {ann.image_id}")
        if ann.defect_class not in CATEGORY_IDS:
            raise SchemaViolationError(f"annotation {ann.instance_id}: no category")
        if ann.area < 1:
            raise SchemaViolationError(f"annotation {ann.instance_id}: area {ann.area}")
        if check_masks:
            mask = decode_rle(ann.rle)
            rows, cols = np.nonzero(mask)
            tight = (
                int(cols.min()), int(rows.min()),
                int(cols.max() - cols.min() + 1), int(rows.max() - rows.min() + 1),
            ) if rows.size else None
            if tight != tuple(ann.bbox) or int(mask.sum()) != ann.area:
                raise SchemaViolationError(
                    f"annotation {ann.instance_id}: bbox or area disagrees with mask"
                )


def _annotation_to_coco(ann):
    return {
        "id": ann.instance_id,
        "image_id": ann.image_id,
        "category_id": CATEGORY_IDS[ann.defect_class],
        "segmentation": ann.rle,
        "bbox": list(ann.bbox),
        "area": ann.area,
        "iscrowd": 0,
    }


def _annotation_from_coco(entry):
    return AnnotationInstance(
        instance_id=int(entry["id"]),
        image_id=str(entry["image_id"]),
        defect_class=CATEGORY_CLASSES[int(entry["category_id"])],
        rle={"size": list(entry["segmentation"]["size"]),
             "counts": list(entry["segmentation"]["counts"])},
        bbox=tuple(int(v) for v in entry["bbox"]),
        area=int(entry["area"]),
    )


def coco_document(manifest, split):
    """The JSON-ready COCO document of one split."""
    part = manifest.for_split(split)
    return {
        "format_version": DATASET_FORMAT_VERSION,
        "info": {
            "split": split,
            "split_ratios": list(manifest.split_ratios),
            "config_hash": manifest.config_hash,
        },
        "images": [asdict(image) for image in part.images],
        "annotations": [_annotation_to_coco(ann) for ann in part.annotations],
        "categories": [dict(cat) for cat in CATEGORIES],
    }


def export_coco(manifest, out_dir, image_source_dir=None):
    """
    Writes ``<split>.json`` for train, val and test.

    Parameters
    ----------
    manifest : DatasetManifest
    out_dir : str
    image_source_dir : str or None, optional
        Directory holding the image files; they are copied into `out_dir`
        under their ``file_name``. None when they already live there.

    Returns
    -------
    list of str
        Paths of the written JSON files, in split order.

    Raises
    ------
    SchemaViolationError
        If the manifest breaks its invariants.
    DatasetIOError
        If a file cannot be written or copied.
    """
    validate_manifest(manifest)
    paths = []
    try:
        os.makedirs(out_dir, exist_ok=True)
        if image_source_dir is not None and os.path.abspath(image_source_dir) != os.path.abspath(out_dir):
            for image in manifest.images:
                target = os.path.join(out_dir, image.file_name)
                os.makedirs(os.path.dirname(target) or out_dir, exist_ok=True)
                shutil.copyfile(os.path.join(image_source_dir, image.file_name), target)
        for split in SPLITS:
            path = os.path.join(out_dir, f"{split}.json")
            with open(path, "w") as handle:
                handle.write(canonical_json(coco_document(manifest, split)) + "\n")
            paths.append(path)
    except OSError as err:
        raise DatasetIOError(f"export to {out_dir} failed: {err}") from err
    logger.info(
        "exported %d images, %d annotations to %s",
        len(manifest.images), len(manifest.annotations), out_dir,
    )
    return paths


def parse_coco(path):
    """
    Reads one split file written by :func:`export_coco`.

    Returns
    -------
    DatasetManifest
        Equal to ``manifest.for_split(split)`` of the exported manifest.

    Raises
    ------
    DatasetIOError
        If the file is unreadable or not a dataset document.
    """
    try:
        with open(path) as handle:
            document = json.load(handle)
        manifest = DatasetManifest(
            images=[ImageEntry(**image) for image in document["images"]],
            annotations=[_annotation_from_coco(a) for a in document["annotations"]],
            split_ratios=tuple(document["info"]["split_ratios"]),
            config_hash=document["info"]["config_hash"],
        )
    except OSError as err:
        raise DatasetIOError(f"cannot read {path}: {err}") from err
    except (ValueError, KeyError, TypeError) as err:
        raise DatasetIOError(f"{path} is not a dataset file: {err}", path=str(path)) from err
    return manifest


def read_dataset(out_dir):
    """Reads all split files of a dataset into one manifest (split order)."""
    parts = [parse_coco(os.path.join(out_dir, f"{split}.json")) for split in SPLITS]
    return DatasetManifest(
        images=[image for part in parts for image in part.images],
        annotations=[ann for part in parts for ann in part.annotations],
        split_ratios=parts[0].split_ratios,
        config_hash=parts[0].config_hash,
    )


# statistics


@dataclass(frozen=True)
class StatsConfig:
    """
    Parameters
    ----------
    grid_height, grid_width : int
        Cells of the spatial density grid (default 70 x 70).
    n_bins : int
        Log-spaced bins of the size histogram (default 50).
    min_percent, max_percent : float
        Histogram range as percent of image area (default 0.001 to 10).
    split : str
        Split the statistics are computed on (default train).
    """

    grid_height: int = 70
    grid_width: int = 70
    n_bins: int = 50
    min_percent: float = 0.001
    max_percent: float = 10.0
    split: str = "train"

    def __post_init__(self):
        if min(self.grid_height, self.grid_width, self.n_bins) < 1:
            raise InvalidConfigError("grid and bin counts must be positive")
        if not 0 < self.min_percent < self.max_percent:
            raise InvalidConfigError(
                f"histogram range [{self.min_percent}, {self.max_percent}]"
            )
        if self.split not in SPLITS:
            raise InvalidConfigError(f"unknown split {self.split!r}")


@dataclass(frozen=True)
class StatsReport:
    """Density grid, histogram edges (percent) and histogram counts."""

    density: np.ndarray
    bin_edges: np.ndarray
    histogram: np.ndarray


def dataset_stats(manifest, cfg=None):
    """
    Spatial density and size distribution of a split's instances.

    Each density cell counts the instance mask pixels that fall in it, so
    the grid sums to the total annotated area. Instance sizes outside the
    histogram range are counted in the end bins.

    Parameters
    ----------
    manifest : DatasetManifest
    cfg : StatsConfig or None, optional

    Returns
    -------
    StatsReport
    """
    cfg = StatsConfig() if cfg is None else cfg
    part = manifest.for_split(cfg.split)
    sizes = {image.id: (image.height, image.width) for image in part.images}
    density = np.zeros((cfg.grid_height, cfg.grid_width), dtype=np.int64)
    percents = []
    for ann in part.annotations:
        height, width = sizes[ann.image_id]
        rows, cols = np.nonzero(decode_rle(ann.rle))
        np.add.at(
            density,
            (rows * cfg.grid_height // height, cols * cfg.grid_width // width),
            1,
        )
        percents.append(100.0 * ann.area / (height * width))
    edges = np.logspace(
        math.log10(cfg.min_percent), math.log10(cfg.max_percent), cfg.n_bins + 1
    )
    clipped = np.clip(np.asarray(percents, dtype=float), edges[0], edges[-1])
    histogram, _ = np.histogram(clipped, bins=edges)
    return StatsReport(density=density, bin_edges=edges, histogram=histogram)


def write_stats(report, out_dir):
    """Writes ``density.csv`` and ``size_histogram.csv``; returns both paths."""
    os.makedirs(out_dir, exist_ok=True)
    density_path = os.path.join(out_dir, "density.csv")
    with open(density_path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerows([int(v) for v in row] for row in report.density)
    histogram_path = os.path.join(out_dir, "size_histogram.csv")
    with open(histogram_path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["bin_low_percent", "bin_high_percent", "count"])
        for low, high, count in zip(report.bin_edges[:-1], report.bin_edges[1:], report.histogram):
            writer.writerow([f"{low:.6g}", f"{high:.6g}", int(count)])
    return density_path, histogram_path


# summaries


def summary_counts(manifest):
    """
    Image and instance counts per split and class.

    Returns
    -------
    OrderedDict
        Maps each split and ``"total"`` to a dict with ``images``, one
        count per category name and ``instances``.
    """
    split_of = {image.id: image.split for image in manifest.images}
    names = [cat["name"] for cat in CATEGORIES]
    table = OrderedDict()
    for row in SPLITS + ("total",):
        table[row] = OrderedDict([("images", 0)] + [(n, 0) for n in names] + [("instances", 0)])
    for image in manifest.images:
        table[image.split]["images"] += 1
        table["total"]["images"] += 1
    for ann in manifest.annotations:
        for row in (split_of[ann.image_id], "total"):
            table[row][ann.defect_class.value] += 1
            table[row]["instances"] += 1
    return table


def summary_table(manifest):
    """
    Counts per split and class as CSV and as a fixed-width text table.

    Returns
    -------
    tuple of (str, str)
    """
    table = summary_counts(manifest)
    columns = list(next(iter(table.values())))
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["split"] + columns)
    text_lines = [f"{'split':<8}" + "".join(f"{c:>15}" for c in columns)]
    for split, row in table.items():
        writer.writerow([split] + [row[c] for c in columns])
        text_lines.append(f"{split:<8}" + "".join(f"{row[c]:>15}" for c in columns))
    return buffer.getvalue(), "\n".join(text_lines) + "\n"


def deformation_summary(records):
    """
    Mask-area deformation per group, element shape and scale, as CSV.

    One row per ``(group, shape, r)`` with the number of defects, the mean
    symmetric-difference area, the mean ``delta_b_max`` and the mean and
    minimum printed necking width. The necking cells are empty for groups
    with no measured width.
    """
    groups = {}
    for record in records:
        key = (record.group.value, record.spec.se.shape.value, record.spec.se.scale_r)
        groups.setdefault(key, []).append(record)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        [
            "group",
            "se_shape",
            "r",
            "count",
            "mean_area",
            "mean_delta_b_max",
            "mean_necking_width",
            "min_necking_width",
        ]
    )
    for key in sorted(groups):
        members = groups[key]
        mean_area = float(np.mean([m.symmetric_difference_area for m in members]))
        mean_db = float(np.mean([m.delta_b_max for m in members]))
        widths = [m.necking_width for m in members if m.necking_width is not None]
        necking = (
            [f"{np.mean(widths):.4f}", f"{min(widths):.4f}"] if widths else ["", ""]
        )
        writer.writerow(list(key) + [len(members), f"{mean_area:.4f}", f"{mean_db:.4f}"] + necking)
    return buffer.getvalue()
