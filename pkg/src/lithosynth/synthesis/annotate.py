# -*- coding: utf-8 -*-
"""
Ground-truth instances from differencing rendered image pairs.

The base render B and the defect render B' are pixel-registered, so their
XOR is exactly the region the defect changed. Each 8-connected component
of the XOR that is large enough becomes one instance carrying the class
from the defect's provenance. Masks are stored as column-major run-length
encodings ``{"size": [h, w], "counts": [...]}`` whose first run is
background.
"""

from dataclasses import dataclass
import logging

import numpy as np
from scipy import ndimage

from lithosynth.geometry.layout import BinaryLayout
from lithosynth.geometry.topology import DefectClass, label_components
from lithosynth.util.exceptions import (
    DimensionMismatchError,
    EmptyAnnotationError,
    InvalidConfigError,
    MalformedRleError,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnnotateConfig:
    """
    Parameters
    ----------
    min_area : int
        Smallest component, in output pixels, kept as an instance
        (default 3).
    """

    min_area: int = 3

    def __post_init__(self):
        if self.min_area < 1:
            raise InvalidConfigError(f"min_area {self.min_area} < 1")


@dataclass(frozen=True)
class AnnotationInstance:
    """
    One annotated defect region.

    Attributes
    ----------
    instance_id : int
    image_id : str
    defect_class : DefectClass
    rle : dict
        Run-length encoded mask.
    bbox : tuple of (int, int, int, int)
        Tight ``(x, y, w, h)`` box of the mask.
    area : int
        Number of mask pixels.
    """

    instance_id: int
    image_id: str
    defect_class: DefectClass
    rle: dict
    bbox: tuple
    area: int

    def mask_array(self):
        return decode_rle(self.rle)


@dataclass(frozen=True)
class InstanceExtraction:
    """Instances of one image pair and the number of components discarded."""

    instances: list
    discarded: int


def encode_rle(mask):
    """
    Run-length encodes a binary mask.

    Parameters
    ----------
    mask : array-like
        2-D boolean mask.

    Returns
    -------
    dict
        ``{"size": [h, w], "counts": [...]}``. Runs are taken over the
        column-major pixel order and alternate background/foreground,
        starting with a (possibly empty) background run.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    flat = mask.ravel(order="F")
    if flat.size == 0:
        return {"size": list(mask.shape), "counts": []}
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    edges = np.concatenate(([0], change, [flat.size]))
    counts = np.diff(edges).tolist()
    if flat[0]:
        counts.insert(0, 0)
    return {"size": [int(mask.shape[0]), int(mask.shape[1])], "counts": counts}


def decode_rle(rle):
    """
    Decodes a run-length encoding made by :func:`encode_rle`.

    Raises
    ------
    MalformedRleError
        If a run is negative, the runs do not sum to ``h * w`` or the
        record lacks its fields.
    """
    try:
        height, width = (int(v) for v in rle["size"])
        counts = np.asarray(rle["counts"], dtype=np.int64)
    except (KeyError, TypeError, ValueError) as err:
        raise MalformedRleError(f"bad record: {err}") from err
    if height < 0 or width < 0 or (counts < 0).any():
        raise MalformedRleError("negative size or run length")
    if int(counts.sum()) != height * width:
        raise MalformedRleError(f"runs sum to {int(counts.sum())}, expected {height * width}")
    values = (np.arange(counts.size) % 2).astype(bool)
    flat = np.repeat(values, counts)
    return flat.reshape((height, width), order="F")


def diff_mask(b, b_prime):
    """
    Pixel-wise XOR of the binary channels of two renders.

    Raises
    ------
    DimensionMismatchError
        If the images differ in shape or render config.
    """
    if b.shape != b_prime.shape:
        raise DimensionMismatchError(f"{b.shape} vs {b_prime.shape}")
    if b.config_hash != b_prime.config_hash:
        raise DimensionMismatchError("images rendered with different configs")
    return BinaryLayout(np.logical_xor(b.binary, b_prime.binary))


def extract_instances(diff, record, image_id, cfg=None, first_instance_id=1):
    """
    Splits a difference mask into annotation instances.

    Parameters
    ----------
    diff : BinaryLayout
        Output of :func:`diff_mask`.
    record : DefectRecord
        Provenance of the pair; every instance takes its class.
    image_id : str
    cfg : AnnotateConfig or None, optional
    first_instance_id : int, optional
        Id of the first instance; the rest follow consecutively.

    Returns
    -------
    InstanceExtraction

    Raises
    ------
    EmptyAnnotationError
        If no component reaches ``cfg.min_area``.
    """
    cfg = AnnotateConfig() if cfg is None else cfg
    labeling = label_components(diff)
    instances = []
    discarded = 0
    objects = ndimage.find_objects(labeling.labels)
    for label, bounds in enumerate(objects, start=1):
        if bounds is None:
            continue
        rows, cols = bounds
        component = labeling.labels == label
        area = int(component[bounds].sum())
        if area < cfg.min_area:
            discarded += 1
            continue
        bbox = (cols.start, rows.start, cols.stop - cols.start, rows.stop - rows.start)
        instances.append(
            AnnotationInstance(
                instance_id=first_instance_id + len(instances),
                image_id=image_id,
                defect_class=DefectClass(record.defect_class),
                rle=encode_rle(component),
                bbox=tuple(int(v) for v in bbox),
                area=area,
            )
        )
    if discarded:
        logger.debug("%s: discarded %d sub-threshold components", image_id, discarded)
    if not instances:
        raise EmptyAnnotationError(
            f"{image_id}: no component of at least {cfg.min_area} px",
            image_id=image_id,
            discarded=discarded,
        )
    return InstanceExtraction(instances=instances, discarded=discarded)


def annotate_pair(b, b_prime, record, image_id, cfg=None, first_instance_id=1):
    """Differences a render pair and extracts its instances."""
    return extract_instances(
        diff_mask(b, b_prime), record, image_id, cfg, first_instance_id
    )
