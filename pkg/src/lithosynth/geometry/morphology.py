# -*- coding: utf-8 -*-
"""
Minkowski operations and the boundary-displacement chain.

Dilation and erosion of binary layouts by square or diamond structuring
elements, localized perturbation of a layout at a target pixel, the support
function of a structuring element and the linear chain that turns it into
a boundary displacement and a predicted edge placement error:

.. math::

    \\Delta b_k(n) = \\sigma h_k(n), \\qquad
    \\Delta EPE(n) = MEEF \\, \\Delta b_k(n)

Pixels outside the grid are background for every operation.
"""

from dataclasses import dataclass
from enum import Enum
import math

import numpy as np
from scipy import ndimage

from lithosynth.geometry.layout import BinaryLayout
from lithosynth.util.exceptions import NonUnitNormalError, OutOfBoundsTargetError

DEFAULT_MEEF = 1.4
UNIT_TOLERANCE = 1e-9


class SEShape(Enum):
    """Structuring-element shapes."""

    SQUARE = "square"
    DIAMOND = "diamond"
    CUSTOM = "custom"


class StructuringElement:
    """
    Origin-centred set of integer offsets.

    Parameters
    ----------
    shape : SEShape
        The family the element belongs to.
    scale_r : int
        Scale of the element in pixels (for custom elements, the largest
        absolute offset component).
    offsets : iterable of (int, int)
        ``(dx, dy)`` pairs. Must contain ``(0, 0)``.

    Notes
    -----
    Use :func:`square` and :func:`diamond` for the two shapes the pipeline
    uses; both are symmetric about the origin.
    """

    __slots__ = ("shape", "scale_r", "offsets")

    def __init__(self, shape, scale_r, offsets):
        offsets = frozenset((int(dx), int(dy)) for dx, dy in offsets)
        if (0, 0) not in offsets:
            raise ValueError("structuring element must contain the origin")
        self.shape = SEShape(shape)
        self.scale_r = int(scale_r)
        self.offsets = offsets

    @classmethod
    def from_offsets(cls, offsets):
        offsets = list(offsets)
        extent = max(max(abs(dx), abs(dy)) for dx, dy in offsets)
        return cls(SEShape.CUSTOM, extent, offsets)

    @property
    def extent(self):
        """Largest ``max(|dx|, |dy|)`` over the offsets."""
        return max(max(abs(dx), abs(dy)) for dx, dy in self.offsets)

    def is_symmetric(self):
        return all((-dx, -dy) in self.offsets for dx, dy in self.offsets)

    def structure(self):
        """
        Boolean ``(2R+1, 2R+1)`` array with the origin at its centre, where
        ``R`` is :attr:`extent`. Entry ``[R + dy, R + dx]`` is set for each
        offset.
        """
        extent = self.extent
        array = np.zeros((2 * extent + 1, 2 * extent + 1), dtype=bool)
        for dx, dy in self.offsets:
            array[extent + dy, extent + dx] = True
        return array

    def to_dict(self):
        record = {"shape": self.shape.value, "r": self.scale_r}
        if self.shape is SEShape.CUSTOM:
            record["offsets"] = sorted(self.offsets)
        return record

    @classmethod
    def from_dict(cls, record):
        shape = SEShape(record["shape"])
        if shape is SEShape.SQUARE:
            return square(record["r"])
        if shape is SEShape.DIAMOND:
            return diamond(record["r"])
        return cls(shape, record["r"], [tuple(o) for o in record["offsets"]])

    def __eq__(self, other):
        if not isinstance(other, StructuringElement):
            return NotImplemented
        return self.shape is other.shape and self.offsets == other.offsets

    def __hash__(self):
        return hash((self.shape, self.offsets))

    def __repr__(self):
        return f"StructuringElement({self.shape.value}, r={self.scale_r})"


def square(r):
    """Square (Chebyshev ball) element ``{(dx, dy): max(|dx|, |dy|) <= r}``."""
    if r < 0:
        raise ValueError(f"scale must be non-negative, got {r}")
    offsets = [(dx, dy) for dx in range(-r, r + 1) for dy in range(-r, r + 1)]
    return StructuringElement(SEShape.SQUARE, r, offsets)


def diamond(r):
    """Diamond (L1 ball) element ``{(dx, dy): |dx| + |dy| <= r}``."""
    if r < 0:
        raise ValueError(f"scale must be non-negative, got {r}")
    offsets = [
        (dx, dy)
        for dx in range(-r, r + 1)
        for dy in range(-r, r + 1)
        if abs(dx) + abs(dy) <= r
    ]
    return StructuringElement(SEShape.DIAMOND, r, offsets)


def make_se(shape, r):
    """Builds a square or diamond element from its shape name."""
    shape = SEShape(shape)
    if shape is SEShape.SQUARE:
        return square(r)
    if shape is SEShape.DIAMOND:
        return diamond(r)
    raise ValueError("custom elements need explicit offsets")


class PerturbationMode(Enum):
    """How a perturbation is localized around its target."""

    FOOTPRINT = "footprint"
    WINDOWED = "windowed"


@dataclass(frozen=True)
class Window:
    """Half-open pixel rectangle ``[x0, x1) x [y0, y1)``."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def slices(self):
        """``(row_slice, column_slice)`` for indexing a raster."""
        return slice(self.y0, self.y1), slice(self.x0, self.x1)

    def is_empty(self):
        return self.x1 <= self.x0 or self.y1 <= self.y0

    def expanded(self, margin, shape=None):
        """Window grown by `margin` on every side, clipped to `shape` if given."""
        window = Window(
            self.x0 - margin, self.y0 - margin, self.x1 + margin, self.y1 + margin
        )
        return window if shape is None else window.clipped(shape)

    def clipped(self, shape):
        height, width = shape
        return Window(
            max(self.x0, 0), max(self.y0, 0), min(self.x1, width), min(self.y1, height)
        )

    def scaled(self, factor, shape=None):
        """Window in the coordinates of a raster magnified by `factor`."""
        window = Window(
            int(math.floor(self.x0 * factor)),
            int(math.floor(self.y0 * factor)),
            int(math.ceil(self.x1 * factor)),
            int(math.ceil(self.y1 * factor)),
        )
        return window if shape is None else window.clipped(shape)

    def to_list(self):
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass(frozen=True)
class PerturbationSpec:
    """
    A localized morphological perturbation.

    Parameters
    ----------
    sigma : int
        -1 for erosion, +1 for dilation.
    se : StructuringElement
        The structuring element.
    target : tuple of (int, int)
        Target pixel ``(x, y)``.
    mode : PerturbationMode, optional
        Footprint (default) or windowed.
    window_margin : int or None, optional
        Margin around the translated element in windowed mode. None means
        ``2 * r``.
    """

    sigma: int
    se: StructuringElement
    target: tuple
    mode: PerturbationMode = PerturbationMode.FOOTPRINT
    window_margin: int = None

    def __post_init__(self):
        if self.sigma not in (-1, 1):
            raise ValueError(f"sigma must be -1 or +1, got {self.sigma}")
        object.__setattr__(self, "target", (int(self.target[0]), int(self.target[1])))
        object.__setattr__(self, "mode", PerturbationMode(self.mode))

    @property
    def margin(self):
        if self.mode is PerturbationMode.FOOTPRINT:
            return 0
        if self.window_margin is None:
            return 2 * self.se.scale_r
        return self.window_margin

    def to_dict(self):
        return {
            "sigma": self.sigma,
            "se": self.se.to_dict(),
            "target": list(self.target),
            "mode": self.mode.value,
            "window_margin": self.window_margin,
        }

    @classmethod
    def from_dict(cls, record):
        return cls(
            sigma=record["sigma"],
            se=StructuringElement.from_dict(record["se"]),
            target=tuple(record["target"]),
            mode=PerturbationMode(record["mode"]),
            window_margin=record.get("window_margin"),
        )


@dataclass(frozen=True)
class EpeModel:
    """
    Linear mask-to-wafer edge model.

    Parameters
    ----------
    meef : float, optional
        Mask error enhancement factor, a scalar placeholder (default 1.4);
        no measured value backs it.
    """

    meef: float = DEFAULT_MEEF

    def __post_init__(self):
        if not self.meef > 0:
            raise ValueError(f"meef must be positive, got {self.meef}")


def _as_mask(a):
    return a.mask if isinstance(a, BinaryLayout) else np.asarray(a, dtype=bool)


def dilate(a, se):
    """
    Minkowski addition of a layout and a structuring element.

    Output pixel ``(x, y)`` is set iff some offset ``(dx, dy)`` has
    ``a(x - dx, y - dy) = 1``; reads outside the grid are background.

    Parameters
    ----------
    a : BinaryLayout
    se : StructuringElement

    Returns
    -------
    BinaryLayout
    """
    mask = _as_mask(a)
    if not mask.any():
        return BinaryLayout(mask)
    return BinaryLayout(
        ndimage.binary_dilation(mask, structure=se.structure(), border_value=0)
    )


def erode(a, se):
    """
    Minkowski subtraction of a structuring element from a layout.

    Output pixel ``(x, y)`` is set iff ``a(x + dx, y + dy) = 1`` for every
    offset; reads outside the grid are background.
    """
    mask = _as_mask(a)
    return BinaryLayout(
        ndimage.binary_erosion(mask, structure=se.structure(), border_value=0)
    )


def footprint_mask(shape, se, target):
    """Boolean raster of the element translated to `target`, clipped to `shape`."""
    height, width = shape
    x, y = target
    mask = np.zeros(shape, dtype=bool)
    for dx, dy in se.offsets:
        px, py = x + dx, y + dy
        if 0 <= px < width and 0 <= py < height:
            mask[py, px] = True
    return mask


def perturbation_window(spec, shape):
    """
    Rectangle outside of which a perturbation leaves the layout untouched.

    The bounding box of the translated element, grown by the perturbation's window
    margin (zero in footprint mode) and clipped to the grid.
    """
    x, y = spec.target
    xs = [dx for dx, _ in spec.se.offsets]
    ys = [dy for _, dy in spec.se.offsets]
    window = Window(x + min(xs), y + min(ys), x + max(xs) + 1, y + max(ys) + 1)
    return window.expanded(spec.margin, shape)


def perturb(a, spec):
    """
    Applies a localized perturbation to a layout.

    In footprint mode a dilation adds the translated element to the layout
    and an erosion removes it. In windowed mode the global dilation or
    erosion replaces the layout inside the perturbation window only.

    Parameters
    ----------
    a : BinaryLayout
    spec : PerturbationSpec

    Returns
    -------
    BinaryLayout
        The perturbed layout; it equals `a` outside
        :func:`perturbation_window`.

    Raises
    ------
    OutOfBoundsTargetError
        If the target lies outside the grid.
    """
    x, y = spec.target
    if not (0 <= x < a.width and 0 <= y < a.height):
        raise OutOfBoundsTargetError(f"target {spec.target} outside {a.width}x{a.height}")
    mask = a.mask
    if spec.mode is PerturbationMode.FOOTPRINT:
        footprint = footprint_mask(a.shape, spec.se, spec.target)
        if spec.sigma > 0:
            return BinaryLayout(mask | footprint)
        return BinaryLayout(mask & ~footprint)
    window = perturbation_window(spec, a.shape)
    # global result inside the window only depends on pixels within extent
    band = window.expanded(spec.se.extent, a.shape)
    local = BinaryLayout(mask[band.slices])
    morphed = dilate(local, spec.se) if spec.sigma > 0 else erode(local, spec.se)
    rows = slice(window.y0 - band.y0, window.y1 - band.y0)
    cols = slice(window.x0 - band.x0, window.x1 - band.x0)
    mask[window.slices] = morphed.pixels[rows, cols].astype(bool)
    return BinaryLayout(mask)


def support(se, n):
    """
    Support function of a structuring element.

    Parameters
    ----------
    se : StructuringElement
    n : tuple of (float, float)
        Unit normal ``(n_x, n_y)``.

    Returns
    -------
    float
        ``max(dx * n_x + dy * n_y)`` over the element's offsets.

    Raises
    ------
    NonUnitNormalError
        If ``|n|`` differs from 1 by more than 1e-9.
    """
    nx, ny = float(n[0]), float(n[1])
    if abs(math.hypot(nx, ny) - 1.0) > UNIT_TOLERANCE:
        raise NonUnitNormalError(f"|n| = {math.hypot(nx, ny)!r}")
    return max(dx * nx + dy * ny for dx, dy in se.offsets)


def boundary_displacement(se, sigma, n):
    """Equivalent boundary displacement ``sigma * support(se, n)``."""
    if sigma not in (-1, 1):
        raise ValueError(f"sigma must be -1 or +1, got {sigma}")
    return sigma * support(se, n)


def predicted_epe(delta_b, model=None):
    """Predicted edge placement error ``meef * delta_b``."""
    model = EpeModel() if model is None else model
    return model.meef * delta_b


def sample_normals(count=16):
    """`count` evenly spaced unit normals, starting at ``(1, 0)``."""
    angles = 2.0 * np.pi * np.arange(count) / count
    return [(math.cos(angle), math.sin(angle)) for angle in angles]


def max_boundary_displacement(se, sigma, count=16):
    """Largest ``|delta_b|`` over :func:`sample_normals`."""
    return max(abs(boundary_displacement(se, sigma, n)) for n in sample_normals(count))
