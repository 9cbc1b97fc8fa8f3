# -*- coding: utf-8 -*-
"""
Connectivity analysis and defect classification.

Components are 8-connected. A perturbation changes the component count by
``delta_k = k(A') - k(A)``; together with the sign of the perturbation, the
irregularity of newly exposed fracture contours and the size of the change,
this decides whether the defect is a pinch, a bridge, a burr or nothing.
"""

from dataclasses import dataclass
from enum import Enum
import math

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from lithosynth.geometry.layout import EIGHT_CONNECTIVITY, BinaryLayout
from lithosynth.geometry.morphology import Window, perturbation_window
from lithosynth.util.exceptions import DimensionMismatchError, InvalidConfigError

FOUR_CONNECTIVITY = ndimage.generate_binary_structure(2, 1)


class DefectClass(Enum):
    """Defect classes. Contamination is reserved and never synthesized."""

    PINCH = "pinch"
    BRIDGE = "bridge"
    BURR = "burr"
    CONTAMINATION = "contamination"
    NONE = "none"


@dataclass(frozen=True)
class ComponentLabeling:
    """
    Labels of the 8-connected components of a layout.

    Attributes
    ----------
    labels : numpy.ndarray
        Per-pixel labels, 0 for background, ``1..count`` in raster order of
        each component's first pixel.
    count : int
        Number of components.
    """

    labels: np.ndarray
    count: int


@dataclass(frozen=True)
class ClassifyConfig:
    """
    Thresholds of the classifier.

    Parameters
    ----------
    irregularity_threshold : float, optional
        Minimum fracture irregularity of a pinch (default 0.0, accept all).
    burr_min_area : int, optional
        Minimum symmetric-difference area of a burr in pixels (default 4).
    """

    irregularity_threshold: float = 0.0
    burr_min_area: int = 4

    def __post_init__(self):
        if not 0.0 <= self.irregularity_threshold <= 1.0:
            raise InvalidConfigError(
                f"irregularity_threshold {self.irregularity_threshold} outside [0, 1]"
            )
        if self.burr_min_area < 0:
            raise InvalidConfigError(f"burr_min_area {self.burr_min_area} < 0")


def _as_mask(a):
    return a.mask if isinstance(a, BinaryLayout) else np.asarray(a, dtype=bool)


def _check_same_shape(a, a_prime):
    if a.shape != a_prime.shape:
        raise DimensionMismatchError(f"{a.shape} vs {a_prime.shape}")


def label_components(a):
    """
    Labels the 8-connected foreground components of a layout.

    Parameters
    ----------
    a : BinaryLayout or array-like

    Returns
    -------
    ComponentLabeling
        Labels numbered in raster-scan order of first touch.
    """
    labels, count = ndimage.label(_as_mask(a), structure=EIGHT_CONNECTIVITY)
    if count > 1:
        # renumber so label order follows the first pixel of each component
        flat = labels.ravel()
        present, first_index = np.unique(flat, return_index=True)
        order = present[1:][np.argsort(first_index[1:], kind="stable")]
        lookup = np.zeros(count + 1, dtype=labels.dtype)
        lookup[order] = np.arange(1, count + 1, dtype=labels.dtype)
        labels = lookup[labels]
    return ComponentLabeling(labels=labels, count=int(count))


def delta_k(a, a_prime):
    """
    Change in component count ``k(a_prime) - k(a)``.

    Raises
    ------
    DimensionMismatchError
        If the layouts differ in shape.
    """
    _check_same_shape(a, a_prime)
    return label_components(a_prime).count - label_components(a).count


def boundary_pixels(mask):
    """Foreground pixels with a 4-neighbour in the background (or off-grid)."""
    mask = np.asarray(mask, dtype=bool)
    interior = ndimage.binary_erosion(mask, structure=FOUR_CONNECTIVITY, border_value=0)
    return mask & ~interior


def local_width(mask, max_width=None):
    """
    Side of the largest axis-aligned foreground square covering each pixel.

    A straight horizontal or vertical line ``w`` pixels wide has width
    ``w`` along its whole length, and narrows where it is necked. Diagonal
    strokes read narrower than their perpendicular width.

    Parameters
    ----------
    mask : array-like
        2-D boolean mask; off-grid pixels count as background.
    max_width : int or None, optional
        Largest side tried; wider pixels report this value.

    Returns
    -------
    numpy.ndarray
        Integer widths, 0 on the background.
    """
    mask = np.asarray(mask, dtype=bool)
    height, width = mask.shape
    limit = min(height, width) if max_width is None else min(max_width, height, width)
    widths = mask.astype(np.int64)
    rows, cols = np.arange(height), np.arange(width)
    # corners[i, j]: a side x side square with bottom-right pixel (i, j) fits
    corners = mask.copy()
    for side in range(2, limit + 1):
        grown = np.zeros_like(corners)
        grown[1:, 1:] = (
            corners[1:, 1:] & corners[:-1, 1:] & corners[1:, :-1] & corners[:-1, :-1]
        )
        if not grown.any():
            break
        corners = grown
        table = np.pad(corners.astype(np.int64).cumsum(0).cumsum(1), ((1, 0), (1, 0)))
        r1, c1 = np.minimum(rows + side, height), np.minimum(cols + side, width)
        covered = (
            table[r1][:, c1] - table[rows][:, c1] - table[r1][:, cols] + table[rows][:, cols]
        ) > 0
        widths[covered] = side
    return widths


def minimum_width(mask, window, max_width=64):
    """
    Narrowest :func:`local_width` of the foreground inside `window`.

    Returns 0 when the window holds no foreground.
    """
    mask = np.asarray(mask, dtype=bool)
    crop = window.expanded(max_width, mask.shape)
    widths = local_width(mask[crop.slices], max_width)
    inner = Window(
        window.x0 - crop.x0, window.y0 - crop.y0, window.x1 - crop.x0, window.y1 - crop.y0
    )
    values = widths[inner.slices][mask[window.slices]]
    return int(values.min()) if values.size else 0


def _geodesic_chord_and_arc(rows, cols):
    """
    Chord and arc of one 8-connected chain of pixels.

    The arc is the longest geodesic found by a double sweep (steps of 1
    along axes and sqrt(2) along diagonals); the chord is the straight
    distance between its two ends.
    """
    n_pixels = len(rows)
    if n_pixels < 2:
        return 0.0, 0.0
    index = {(r, c): ii for ii, (r, c) in enumerate(zip(rows, cols))}
    src, dst, weight = [], [], []
    for ii, (r, c) in enumerate(zip(rows, cols)):
        for dr, dc in ((0, 1), (1, -1), (1, 0), (1, 1)):
            jj = index.get((r + dr, c + dc))
            if jj is not None:
                src.append(ii)
                dst.append(jj)
                weight.append(math.sqrt(2.0) if dr and dc else 1.0)
    graph = coo_matrix((weight, (src, dst)), shape=(n_pixels, n_pixels)).tocsr()
    from_start = dijkstra(graph, directed=False, indices=0)
    end_a = int(np.argmax(np.where(np.isfinite(from_start), from_start, -1)))
    from_a = dijkstra(graph, directed=False, indices=end_a)
    end_b = int(np.argmax(np.where(np.isfinite(from_a), from_a, -1)))
    arc = float(from_a[end_b])
    chord = math.hypot(rows[end_a] - rows[end_b], cols[end_a] - cols[end_b])
    return chord, arc


def irregularity(a, a_prime, window):
    """
    Irregularity of the fracture contours a perturbation exposes.

    New boundary pixels are boundary pixels of `a_prime` that were not
    boundary pixels of `a`. Each 8-connected chain of them inside `window`
    scores ``1 - chord / arc``; the result is the largest score, or 0 when
    no new boundary exists.

    Parameters
    ----------
    a, a_prime : BinaryLayout
        Layout before and after the perturbation.
    window : Window
        Region in which to look for new boundary.

    Returns
    -------
    float
        Score in [0, 1]. A straight cut scores 0.
    """
    _check_same_shape(a, a_prime)
    new_boundary = boundary_pixels(_as_mask(a_prime)) & ~boundary_pixels(_as_mask(a))
    window = window.clipped(a.shape)
    local = np.zeros_like(new_boundary)
    local[window.slices] = new_boundary[window.slices]
    if not local.any():
        return 0.0
    labels, count = ndimage.label(local, structure=EIGHT_CONNECTIVITY)
    score = 0.0
    for label in range(1, count + 1):
        rows, cols = np.nonzero(labels == label)
        chord, arc = _geodesic_chord_and_arc(rows.tolist(), cols.tolist())
        if arc > 0:
            score = max(score, 1.0 - chord / arc)
    return min(max(score, 0.0), 1.0)


def classify_from_measurements(sigma, dk, irregularity_score, changed_area, thresholds):
    """
    The class predicate on already measured quantities.

    Parameters
    ----------
    sigma : int
        -1 erosion, +1 dilation.
    dk : int
        Change in component count.
    irregularity_score : float
        Fracture irregularity (only consulted for erosions).
    changed_area : int
        Pixel count of the symmetric difference between the layouts.
    thresholds : ClassifyConfig

    Returns
    -------
    DefectClass
    """
    if sigma < 0 and dk > 0 and irregularity_score >= thresholds.irregularity_threshold:
        return DefectClass.PINCH
    if sigma > 0 and dk < 0:
        return DefectClass.BRIDGE
    if sigma > 0 and dk == 0 and changed_area >= thresholds.burr_min_area:
        return DefectClass.BURR
    return DefectClass.NONE


def classify(a, a_prime, spec, thresholds=None):
    """
    Classifies the defect a perturbation produced.

    pinch iff erosion, ``delta_k > 0`` and irregularity at least the
    threshold; bridge iff dilation and ``delta_k < 0``; burr iff dilation,
    ``delta_k == 0`` and the symmetric difference covers at least
    ``burr_min_area`` pixels; none otherwise.

    Parameters
    ----------
    a, a_prime : BinaryLayout
        Layout before and after the perturbation.
    spec : PerturbationSpec
        The perturbation that produced `a_prime`.
    thresholds : ClassifyConfig or None, optional

    Returns
    -------
    DefectClass
    """
    return measure_defect(a, a_prime, spec, thresholds)[0]


def measure_defect(a, a_prime, spec, thresholds=None, count_a=None):
    """
    Classifies a perturbation and returns the quantities behind the class.

    Parameters
    ----------
    a, a_prime, spec, thresholds
        As for :func:`classify`.
    count_a : int or None, optional
        Component count of `a` if already known.

    Returns
    -------
    tuple of (DefectClass, int, int)
        The class, ``delta_k`` and the symmetric-difference area.
    """
    thresholds = ClassifyConfig() if thresholds is None else thresholds
    _check_same_shape(a, a_prime)
    if count_a is None:
        count_a = label_components(a).count
    dk = label_components(a_prime).count - count_a
    changed_area = int(np.count_nonzero(a.pixels != a_prime.pixels))
    score = 0.0
    if spec.sigma < 0 and dk > 0:
        window = perturbation_window(spec, a.shape).expanded(1, a.shape)
        score = irregularity(a, a_prime, window)
    defect_class = classify_from_measurements(
        spec.sigma, dk, score, changed_area, thresholds
    )
    return defect_class, dk, changed_area


def classify_rendered(b, b_prime, spec, thresholds=None):
    """
    Re-checks a defect class on rendered binary images.

    Uses the component counts of the binarized renders and the changed
    area between them; irregularity is not re-measured. The design-level
    class stays authoritative, this is a consistency report.

    Parameters
    ----------
    b, b_prime : RenderedImage
        Renders of the defect-free and defect layouts.
    spec : PerturbationSpec
    thresholds : ClassifyConfig or None, optional

    Returns
    -------
    DefectClass
    """
    thresholds = ClassifyConfig() if thresholds is None else thresholds
    _check_same_shape(b.binary, b_prime.binary)
    dk = label_components(b_prime.binary).count - label_components(b.binary).count
    changed_area = int(np.count_nonzero(b.binary != b_prime.binary))
    return classify_from_measurements(spec.sigma, dk, 1.0, changed_area, thresholds)
