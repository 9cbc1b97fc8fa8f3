# -*- coding: utf-8 -*-
"""
Proxy lithographic rendering and empirical edge placement error.

A layout is magnified to the output size by bilinear interpolation,
blurred by a truncated Gaussian point-spread function and thresholded at
the resist threshold. The chain stands in for exposure, development and
microscopy; it keeps the near-threshold amplification of edge shifts that
makes the predicted and measured EPE comparable.
"""

from dataclasses import asdict, dataclass
import hashlib
import logging
import math
import os

import numpy as np
from scipy import ndimage, stats

from lithosynth.geometry.morphology import Window, perturbation_window
from lithosynth.geometry.topology import boundary_pixels, delta_k, minimum_width
from lithosynth.util.exceptions import (
    DimensionMismatchError,
    InvalidConfigError,
    WindowEmptyError,
)
from lithosynth.util.helper import canonical_json
from lithosynth.util.imageio import write_pbm, write_pgm, write_ppm

logger = logging.getLogger(__name__)

RENDER_FORMAT_VERSION = 1

CLASS_COLOURS = {
    "bridge": (0, 0, 255),
    "burr": (0, 255, 0),
    "pinch": (255, 105, 180),
    "contamination": (255, 255, 255),
}


@dataclass(frozen=True)
class RenderConfig:
    """
    Settings of the rendering proxy.

    Parameters
    ----------
    output_size : int
        Side of the square output image in pixels (default 700).
    scale : float or None
        Layout-to-image magnification. None means ``output_size`` over the
        layout side, so the whole layout fills the image.
    psf_sigma : float
        Standard deviation of the Gaussian PSF in output pixels (default 3).
    resist_threshold : float
        Normalized intensity at which resist prints (default 0.5).
    noise_sigma : float
        Standard deviation of additive intensity noise (default 0, off).
    """

    output_size: int = 700
    scale: float = None
    psf_sigma: float = 3.0
    resist_threshold: float = 0.5
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.output_size < 1:
            raise InvalidConfigError(f"output_size {self.output_size} < 1")
        if self.scale is not None and not self.scale > 0:
            raise InvalidConfigError(f"scale {self.scale} must be positive")
        if self.psf_sigma < 0:
            raise InvalidConfigError(f"psf_sigma {self.psf_sigma} < 0")
        if not 0.0 < self.resist_threshold < 1.0:
            raise InvalidConfigError(
                f"resist_threshold {self.resist_threshold} outside (0, 1)"
            )
        if self.noise_sigma < 0:
            raise InvalidConfigError(f"noise_sigma {self.noise_sigma} < 0")

    def scale_for(self, layout_size):
        """Magnification used for a layout of side `layout_size`."""
        return self.output_size / layout_size if self.scale is None else self.scale

    def digest(self):
        """sha-256 of the canonical form of this config."""
        return hashlib.sha256(canonical_json(asdict(self)).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RenderedImage:
    """
    A rendered proxy micrograph.

    Attributes
    ----------
    gray : numpy.ndarray
        Normalized intensities in [0, 1].
    binary : numpy.ndarray
        ``gray >= resist_threshold``.
    layout_id : str
        Id of the source layout.
    config_hash : str
        :meth:`RenderConfig.digest` of the config used.
    layout_shape : tuple of (int, int)
        Shape of the source layout.
    """

    gray: np.ndarray
    binary: np.ndarray
    layout_id: str
    config_hash: str
    layout_shape: tuple

    @property
    def width(self):
        return self.gray.shape[1]

    @property
    def height(self):
        return self.gray.shape[0]

    @property
    def shape(self):
        return self.gray.shape


def gaussian_kernel(sigma, truncate=4.0):
    """
    Normalized 1-D Gaussian kernel truncated at ``truncate * sigma``.

    ``sigma == 0`` gives the identity kernel ``[1.0]``.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return np.ones(1)
    radius = int(math.ceil(truncate * sigma))
    x = np.arange(-radius, radius + 1, dtype=float)
    kernel = np.exp(-0.5 * (x / sigma) ** 2)
    return kernel / kernel.sum()


def _sample_positions(cfg, layout_size):
    """Layout coordinate (pixel centres at integers) of each output pixel."""
    scale = cfg.scale_for(layout_size)
    index = np.arange(cfg.output_size, dtype=float)
    return (index + 0.5 - cfg.output_size / 2.0) / scale + layout_size / 2.0 - 0.5


def render(a, cfg=None, noise_seed=0, layout_id=""):
    """
    Renders a layout through the lithography proxy.

    Parameters
    ----------
    a : BinaryLayout
    cfg : RenderConfig or None, optional
    noise_seed : int, optional
        Seed of the intensity noise; unused when ``noise_sigma`` is 0.
    layout_id : str, optional
        Provenance id carried by the result.

    Returns
    -------
    RenderedImage
        ``output_size x output_size`` image, a pure function of
        ``(a, cfg, noise_seed)``.
    """
    cfg = RenderConfig() if cfg is None else cfg
    if a.height != a.width:
        raise DimensionMismatchError(f"layouts must be square, got {a.shape}")
    if cfg.output_size < a.width:
        raise InvalidConfigError(
            f"output_size {cfg.output_size} smaller than layout side {a.width}"
        )
    positions = _sample_positions(cfg, a.width)
    rows, cols = np.meshgrid(positions, positions, indexing="ij")
    gray = ndimage.map_coordinates(
        a.pixels.astype(float), [rows, cols], order=1, mode="nearest"
    )
    if cfg.psf_sigma > 0:
        kernel = gaussian_kernel(cfg.psf_sigma)
        gray = ndimage.convolve1d(gray, kernel, axis=0, mode="nearest")
        gray = ndimage.convolve1d(gray, kernel, axis=1, mode="nearest")
    if cfg.noise_sigma > 0:
        rng = np.random.default_rng(noise_seed)
        gray = gray + rng.normal(0.0, cfg.noise_sigma, size=gray.shape)
    gray = np.clip(gray, 0.0, 1.0)
    return RenderedImage(
        gray=gray,
        binary=gray >= cfg.resist_threshold,
        layout_id=layout_id,
        config_hash=cfg.digest(),
        layout_shape=a.shape,
    )


def output_window(window, cfg, layout_size):
    """Maps a layout window to the output pixels it covers."""
    scale = cfg.scale_for(layout_size)
    offset = cfg.output_size / 2.0 - layout_size * scale / 2.0
    return Window(
        int(math.floor(window.x0 * scale + offset)),
        int(math.floor(window.y0 * scale + offset)),
        int(math.ceil(window.x1 * scale + offset)),
        int(math.ceil(window.y1 * scale + offset)),
    ).clipped((cfg.output_size, cfg.output_size))


def _measurement_window(b, b_prime, record, cfg):
    """Perturbation window in output pixels, grown by the PSF reach."""
    if b.shape != b_prime.shape or b.config_hash != b_prime.config_hash:
        raise DimensionMismatchError(f"{record.id}: images rendered differently")
    layout_window = perturbation_window(record.spec, b.layout_shape)
    return output_window(layout_window, cfg, b.layout_shape[0]).expanded(
        int(math.ceil(4 * cfg.psf_sigma)), b.shape
    )


def measure_epe(b, b_prime, record, cfg=None):
    """
    Measured edge placement error of one defect.

    The directed Hausdorff distance from the contour of `b` to the contour
    of `b_prime`, taken over the contour pixels of `b` inside the
    perturbation window. The window is mapped to output pixels and grown
    by ``ceil(4 * psf_sigma)`` to include the blur.

    Parameters
    ----------
    b, b_prime : RenderedImage
        Renders of the base layout and of the defect layout.
    record : DefectRecord
    cfg : RenderConfig or None, optional
        Must be the config both images were rendered with.

    Returns
    -------
    float
        Distance in output pixels; 0 when the images agree in the window.

    Raises
    ------
    DimensionMismatchError
        If the images differ in shape or render config.
    WindowEmptyError
        If `b` has no contour in the window or `b_prime` none at all.
    """
    cfg = RenderConfig() if cfg is None else cfg
    window = _measurement_window(b, b_prime, record, cfg)
    if np.array_equal(b.binary[window.slices], b_prime.binary[window.slices]):
        return 0.0
    source = np.zeros(b.shape, dtype=bool)
    source[window.slices] = boundary_pixels(b.binary)[window.slices]
    target = boundary_pixels(b_prime.binary)
    if not source.any() or not target.any():
        raise WindowEmptyError(f"{record.id}: window {window.to_list()}", defect_id=record.id)
    distance = ndimage.distance_transform_edt(~target)
    return float(distance[source].max())


def measure_necking(b, b_prime, record, cfg=None):
    """
    Narrowest printed width left by an erosion defect.

    Parameters
    ----------
    b, b_prime : RenderedImage
        Renders of the base layout and of the defect layout.
    record : DefectRecord
    cfg : RenderConfig or None, optional
        Must be the config both images were rendered with.

    Returns
    -------
    float
        0 when the print is severed (`b_prime` has more components than
        `b`); otherwise the smallest local width (see
        :func:`lithosynth.geometry.topology.local_width`) of the `b_prime`
        foreground inside the EPE window, in output pixels.

    Raises
    ------
    DimensionMismatchError
        If the images differ in shape or render config.
    WindowEmptyError
        If `b_prime` has no foreground in the window.
    """
    cfg = RenderConfig() if cfg is None else cfg
    window = _measurement_window(b, b_prime, record, cfg)
    if not b_prime.binary[window.slices].any():
        raise WindowEmptyError(f"{record.id}: window {window.to_list()}", defect_id=record.id)
    if delta_k(b.binary, b_prime.binary) > 0:
        return 0.0
    return float(minimum_width(b_prime.binary, window))


def epe_correlation(records, measured):
    """
    Spearman rank correlation of predicted and measured edge displacement.

    Parameters
    ----------
    records : list of DefectRecord
    measured : list of float
        Measured EPE of each record, in the same order.

    Returns
    -------
    tuple of (float, float)
        ``(rho, p_value)`` between ``|delta_b_max|`` and ``|measured|``.
    """
    if len(records) != len(measured):
        raise ValueError("records and measurements differ in length")
    if len(records) < 2:
        raise ValueError("correlation needs at least two defects")
    delta_b = np.abs([record.delta_b_max for record in records])
    result = stats.spearmanr(delta_b, np.abs(np.asarray(measured, dtype=float)))
    return float(result[0]), float(result[1])


def render_overlay(rendered, instances):
    """
    RGB inspection image: the gray render with instances painted by class.

    Parameters
    ----------
    rendered : RenderedImage
    instances : list of AnnotationInstance

    Returns
    -------
    numpy.ndarray
        ``(h, w, 3)`` uint8 array.
    """
    gray = np.rint(rendered.gray * 255.0).astype(np.uint8)
    rgb = np.repeat(gray[:, :, np.newaxis], 3, axis=2)
    for instance in instances:
        colour = CLASS_COLOURS[instance.defect_class.value]
        rgb[instance.mask_array()] = colour
    return rgb


def save_rendered(path_stem, img, instances=None):
    """
    Writes ``<stem>.pgm`` (gray), ``<stem>.pbm`` (binary) and
    ``<stem>.json`` (provenance); with `instances`, also ``<stem>.ppm``.
    """
    directory = os.path.dirname(path_stem)
    if directory:
        os.makedirs(directory, exist_ok=True)
    write_pgm(path_stem + ".pgm", img.gray)
    write_pbm(path_stem + ".pbm", img.binary)
    if instances is not None:
        write_ppm(path_stem + ".ppm", render_overlay(img, instances))
    provenance = {
        "format_version": RENDER_FORMAT_VERSION,
        "layout_id": img.layout_id,
        "config_hash": img.config_hash,
        "width": img.width,
        "height": img.height,
    }
    with open(path_stem + ".json", "w") as handle:
        handle.write(canonical_json(provenance, indent=2) + "\n")
