# -*- coding: utf-8 -*-
"""
Defect-free base layouts.

A layout is a binary raster on which pixels with value 1 are the designed
pattern (resist) and pixels with value 0 are background. This module builds
the base-layout library: horizontal and vertical line arrays plus seeded
composite patterns of axis-aligned and 45 degree strokes, all on a
128 x 128 grid by default, and reads/writes it as PGM files with sidecar
spec records.
"""

from dataclasses import asdict, dataclass, field
from enum import Enum
import json
import logging
import os

import numpy as np
from scipy import ndimage

from lithosynth.util.exceptions import (
    DatasetIOError,
    GenerationFailureError,
    InvalidSpecError,
)
from lithosynth.util.helper import canonical_json, derive_seed, sha256_of_array
from lithosynth.util.imageio import read_pgm, write_pgm

logger = logging.getLogger(__name__)

LIBRARY_SIZE = 128
FORMAT_VERSION = 1
# 8-connectivity neighbourhood used for every component count
EIGHT_CONNECTIVITY = np.ones((3, 3), dtype=bool)

# (line_width, pitch) of the five line arrays per orientation
DEFAULT_LINE_PARAMETERS = ((4, 10), (4, 12), (5, 12), (6, 14), (8, 16))
# twice the default largest element scale
COMPOSITE_MAX_GAP = 12


class BinaryLayout:
    """
    Immutable binary raster.

    Parameters
    ----------
    pixels : array-like
        2-D array whose values are all 0 or 1 (booleans are accepted). Row
        index is y, column index is x.

    Raises
    ------
    ValueError
        If `pixels` is not 2-D or holds values other than 0 and 1.
    """

    __slots__ = ("_pixels",)

    def __init__(self, pixels):
        array = np.asarray(pixels)
        if array.ndim != 2:
            raise ValueError(f"layout must be 2-D, got shape {array.shape}")
        if array.dtype != bool and not np.isin(array, (0, 1)).all():
            raise ValueError("every layout pixel must be exactly 0 or 1")
        array = array.astype(np.uint8, copy=True)
        array.flags.writeable = False
        self._pixels = array

    @classmethod
    def empty(cls, height, width=None):
        """All-background layout."""
        width = height if width is None else width
        return cls(np.zeros((height, width), dtype=np.uint8))

    @classmethod
    def full(cls, height, width=None):
        """All-foreground layout."""
        width = height if width is None else width
        return cls(np.ones((height, width), dtype=np.uint8))

    @property
    def pixels(self):
        """Read-only ``uint8`` array of the layout."""
        return self._pixels

    @property
    def mask(self):
        """The layout as a boolean array (a copy)."""
        return self._pixels.astype(bool)

    @property
    def width(self):
        return self._pixels.shape[1]

    @property
    def height(self):
        return self._pixels.shape[0]

    @property
    def shape(self):
        return self._pixels.shape

    def count(self):
        """Number of foreground pixels."""
        return int(self._pixels.sum())

    def complement(self):
        """Layout with foreground and background swapped (clipped to the grid)."""
        return BinaryLayout(1 - self._pixels)

    def sha256(self):
        return sha256_of_array(self._pixels)

    def __eq__(self, other):
        if not isinstance(other, BinaryLayout):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._pixels, other._pixels)

    __hash__ = None

    def __repr__(self):
        return f"BinaryLayout({self.height}x{self.width}, foreground={self.count()})"

    def __getstate__(self):
        return self._pixels

    def __setstate__(self, state):
        state = np.array(state, dtype=np.uint8)
        state.flags.writeable = False
        self._pixels = state


class LayoutKind(Enum):
    """The families of base layouts."""

    HORIZONTAL = "horizontal-lines"
    VERTICAL = "vertical-lines"
    COMPOSITE = "composite"


@dataclass(frozen=True)
class LayoutSpec:
    """
    Parameters of one base layout.

    Parameters
    ----------
    id : str
        Identifier, unique within a library.
    kind : LayoutKind
        Layout family.
    line_width : int, optional
        Line width in pixels (line arrays). Default 4.
    pitch : int, optional
        Line pitch in pixels (line arrays). Must exceed `line_width`.
    offset : int or None, optional
        Row (horizontal) or column (vertical) on which the first line starts.
        None places every line in the middle of its pitch cell, i.e.
        ``(pitch - line_width) // 2``.
    seed : int or None, optional
        Generator seed, required for composite layouts.
    size : int, optional
        Grid side in pixels. Default 128.
    """

    id: str
    kind: LayoutKind
    line_width: int = 4
    pitch: int = 16
    offset: int = None
    seed: int = None
    size: int = LIBRARY_SIZE

    def __post_init__(self):
        if not isinstance(self.kind, LayoutKind):
            object.__setattr__(self, "kind", LayoutKind(self.kind))
        if self.line_width < 1:
            raise InvalidSpecError(f"{self.id}: line_width {self.line_width} < 1")
        if self.pitch <= self.line_width:
            raise InvalidSpecError(
                f"{self.id}: pitch {self.pitch} must exceed line_width {self.line_width}"
            )
        if self.size < 1:
            raise InvalidSpecError(f"{self.id}: size {self.size} < 1")
        if self.kind is LayoutKind.COMPOSITE and self.seed is None:
            raise InvalidSpecError(f"{self.id}: composite layouts need a seed")

    @property
    def phase(self):
        """Start row/column of the first line."""
        if self.offset is not None:
            return self.offset
        return (self.pitch - self.line_width) // 2

    def to_dict(self):
        record = asdict(self)
        record["kind"] = self.kind.value
        return record

    @classmethod
    def from_dict(cls, record):
        return cls(**{**record, "kind": LayoutKind(record["kind"])})


@dataclass(frozen=True)
class LibraryConfig:
    """
    Composition of the base-layout library.

    Parameters
    ----------
    n_composite, n_horizontal, n_vertical : int
        Number of layouts of each family (defaults 15, 5, 5).
    master_seed : int
        Seed from which every composite layout derives its own seed.
    size : int
        Grid side in pixels.
    line_parameters : tuple of (int, int)
        ``(line_width, pitch)`` pairs cycled through by the line arrays.
    """

    n_composite: int = 15
    n_horizontal: int = 5
    n_vertical: int = 5
    master_seed: int = 0
    size: int = LIBRARY_SIZE
    line_parameters: tuple = field(default=DEFAULT_LINE_PARAMETERS)

    def __post_init__(self):
        object.__setattr__(
            self,
            "line_parameters",
            tuple(tuple(int(v) for v in pair) for pair in self.line_parameters),
        )
        if min(self.n_composite, self.n_horizontal, self.n_vertical) < 0:
            raise InvalidSpecError("layout counts must be non-negative")
        if (self.n_horizontal or self.n_vertical) and not self.line_parameters:
            raise InvalidSpecError("line arrays requested without line_parameters")
        for width, pitch in self.line_parameters:
            if width < 1 or pitch <= width:
                raise InvalidSpecError(f"bad line parameters ({width}, {pitch})")


def count_components(pixels):
    """Number of 8-connected foreground components of a raster."""
    _, count = ndimage.label(np.asarray(pixels), structure=EIGHT_CONNECTIVITY)
    return int(count)


def smallest_gap(pixels):
    """
    Background pixels separating the two closest 8-connected components.

    The gap is the Chebyshev distance between the nearest pixels of two
    distinct components, minus one. None when there are fewer than two
    components.
    """
    labels, count = ndimage.label(np.asarray(pixels, dtype=bool), structure=EIGHT_CONNECTIVITY)
    gap = None
    for label in range(1, count):
        distance = ndimage.distance_transform_cdt(labels != label, metric="chessboard")
        nearest = int(distance[labels > label].min()) - 1
        gap = nearest if gap is None else min(gap, nearest)
    return gap


def make_line_array(spec):
    """
    Creates a layout of parallel horizontal or vertical lines.

    Parameters
    ----------
    spec : LayoutSpec
        Spec of kind horizontal-lines or vertical-lines.

    Returns
    -------
    BinaryLayout
        ``size x size`` layout in which row (or column) ``i`` is foreground
        iff ``(i - phase) mod pitch < line_width``.

    Raises
    ------
    InvalidSpecError
        If `spec` describes a composite layout.
    """
    if spec.kind is LayoutKind.COMPOSITE:
        raise InvalidSpecError(f"{spec.id}: make_line_array needs a line-array spec")
    index = np.arange(spec.size)
    on = ((index - spec.phase) % spec.pitch) < spec.line_width
    pixels = np.zeros((spec.size, spec.size), dtype=np.uint8)
    if spec.kind is LayoutKind.HORIZONTAL:
        pixels[on, :] = 1
    else:
        pixels[:, on] = 1
    return BinaryLayout(pixels)


def _axis_rectangle(rng, size):
    """Mask of one axis-aligned stroke that lies fully inside the grid."""
    width = int(rng.integers(3, 11))
    length = int(rng.integers(min(24, size - 2), max(min(100, size - 2), 25)))
    length = min(length, size - 2)
    mask = np.zeros((size, size), dtype=bool)
    if rng.random() < 0.5:
        y0 = int(rng.integers(1, size - width))
        x0 = int(rng.integers(1, size - length))
        mask[y0 : y0 + width, x0 : x0 + length] = True
    else:
        x0 = int(rng.integers(1, size - width))
        y0 = int(rng.integers(1, size - length))
        mask[y0 : y0 + length, x0 : x0 + width] = True
    return mask


def _diagonal_bar(rng, size):
    """Mask of one 45 degree stroke that lies fully inside the grid."""
    width = int(rng.integers(3, 11))
    length = int(rng.integers(16, 65))
    slope = 1 if rng.random() < 0.5 else -1
    span = int(np.ceil(length / np.sqrt(2.0)))
    margin = width + 1
    if size - 2 * margin - span <= 0:
        return np.zeros((size, size), dtype=bool)
    x0 = int(rng.integers(margin, size - margin - span))
    if slope > 0:
        y0 = int(rng.integers(margin, size - margin - span))
    else:
        y0 = int(rng.integers(margin + span, size - margin))
    yy, xx = np.mgrid[0:size, 0:size]
    rel_x = xx - x0
    rel_y = yy - y0
    along = (rel_x + slope * rel_y) / np.sqrt(2.0)
    across = (-slope * rel_x + rel_y) / np.sqrt(2.0)
    return (along >= 0) & (along <= length) & (np.abs(across) <= width / 2.0)


def make_composite(spec, max_attempts=100, max_gap=COMPOSITE_MAX_GAP):
    """
    Creates a seeded composite layout.

    The layout is the union of 4-12 axis-aligned strokes and 0-4 strokes at
    45 degrees, each 3-10 px wide and drawn fully inside the grid. Draws are
    repeated until the union has at least two 8-connected components, two
    of which are at most `max_gap` pixels apart, so that every composite
    offers a site a bridge can close.

    Parameters
    ----------
    spec : LayoutSpec
        Spec of kind composite. The same seed always gives the same layout.
    max_attempts : int, optional
        Number of draws before giving up. Default 100.
    max_gap : int, optional
        Largest accepted :func:`smallest_gap`. Default 12.

    Returns
    -------
    BinaryLayout

    Raises
    ------
    InvalidSpecError
        If `spec` is not a composite spec.
    GenerationFailureError
        If no draw has two components within `max_gap`.
    """
    if spec.kind is not LayoutKind.COMPOSITE:
        raise InvalidSpecError(f"{spec.id}: make_composite needs a composite spec")
    rng = np.random.default_rng(spec.seed)
    size = spec.size
    for attempt in range(max_attempts):
        mask = np.zeros((size, size), dtype=bool)
        n_rectangles = int(rng.integers(4, 13))
        n_diagonals = int(rng.integers(0, 5))
        for _ in range(n_rectangles):
            mask |= _axis_rectangle(rng, size)
        for _ in range(n_diagonals):
            mask |= _diagonal_bar(rng, size)
        gap = smallest_gap(mask)
        if gap is not None and gap <= max_gap:
            if attempt:
                logger.debug("%s accepted after %d redraws", spec.id, attempt)
            return BinaryLayout(mask)
    raise GenerationFailureError(
        f"{spec.id}: no two components within {max_gap} px in {max_attempts} attempts",
        layout_id=spec.id,
    )


def make_layout(spec):
    """Dispatches to the generator for the kind of layout `spec` describes."""
    if spec.kind is LayoutKind.COMPOSITE:
        return make_composite(spec)
    return make_line_array(spec)


def library_specs(config):
    """
    The layout specs of a library, in library order.

    Horizontal arrays come first (ids ``H00``...), then vertical arrays
    (``V00``...), then composites (``C00``...). Line arrays cycle through
    ``config.line_parameters``; composites get seeds derived from the master
    seed and their id.
    """
    specs = []
    for prefix, kind, count in (
        ("H", LayoutKind.HORIZONTAL, config.n_horizontal),
        ("V", LayoutKind.VERTICAL, config.n_vertical),
    ):
        for ii in range(count):
            width, pitch = config.line_parameters[ii % len(config.line_parameters)]
            specs.append(
                LayoutSpec(
                    id=f"{prefix}{ii:02d}",
                    kind=kind,
                    line_width=width,
                    pitch=pitch,
                    size=config.size,
                )
            )
    for ii in range(config.n_composite):
        layout_id = f"C{ii:02d}"
        specs.append(
            LayoutSpec(
                id=layout_id,
                kind=LayoutKind.COMPOSITE,
                seed=derive_seed(config.master_seed, layout_id),
                size=config.size,
            )
        )
    return specs


def build_library(config=None):
    """
    Builds the base-layout library.

    Parameters
    ----------
    config : LibraryConfig or None, optional
        Library composition. The default gives 25 layouts: 5 horizontal
        line arrays, 5 vertical line arrays and 15 composites.

    Returns
    -------
    list of (LayoutSpec, BinaryLayout)
        The layouts in library order. The result is a pure function of
        `config`.

    Raises
    ------
    GenerationFailureError
        Propagated from :func:`make_composite`.
    """
    config = LibraryConfig() if config is None else config
    library = [(spec, make_layout(spec)) for spec in library_specs(config)]
    logger.info("built library of %d layouts", len(library))
    return library


# I/O


def save_layout(directory, spec, layout):
    """
    Writes a layout as ``<id>.pgm`` (foreground 255) and ``<id>.spec.json``.

    Returns
    -------
    str
        Path of the PGM file.
    """
    os.makedirs(directory, exist_ok=True)
    pgm_path = os.path.join(directory, f"{spec.id}.pgm")
    write_pgm(pgm_path, layout.pixels * np.uint8(255))
    with open(os.path.join(directory, f"{spec.id}.spec.json"), "w") as handle:
        handle.write(canonical_json(spec.to_dict(), indent=2) + "\n")
    return pgm_path


def load_layout(pgm_path):
    """
    Reads a layout PGM written by :func:`save_layout`.

    Raises
    ------
    DatasetIOError
        If the image holds values other than 0 and 255.
    """
    raster = read_pgm(pgm_path)
    if not np.isin(raster, (0, 255)).all():
        raise DatasetIOError(f"{pgm_path} is not a binary layout image")
    return BinaryLayout(raster == 255)


def write_library(directory, library):
    """
    Writes every layout plus ``library_manifest.json``.

    The manifest lists id, kind, parameters, seed and the sha-256 of the
    pixel data of each layout.
    """
    entries = []
    for spec, layout in library:
        save_layout(directory, spec, layout)
        entries.append({**spec.to_dict(), "sha256": layout.sha256()})
    manifest = {"format_version": FORMAT_VERSION, "layouts": entries}
    path = os.path.join(directory, "library_manifest.json")
    with open(path, "w") as handle:
        handle.write(canonical_json(manifest, indent=2) + "\n")
    return path


def read_library(directory):
    """
    Reads a library written by :func:`write_library`.

    Raises
    ------
    DatasetIOError
        If the manifest is missing or a layout's hash does not match.
    """
    path = os.path.join(directory, "library_manifest.json")
    try:
        with open(path) as handle:
            manifest = json.load(handle)
    except (OSError, ValueError) as err:
        raise DatasetIOError(f"cannot read {path}: {err}") from err
    library = []
    for entry in manifest["layouts"]:
        entry = dict(entry)
        digest = entry.pop("sha256")
        spec = LayoutSpec.from_dict(entry)
        layout = load_layout(os.path.join(directory, f"{spec.id}.pgm"))
        if layout.sha256() != digest:
            raise DatasetIOError(f"{spec.id}: pixel data does not match manifest hash")
        library.append((spec, layout))
    return library
