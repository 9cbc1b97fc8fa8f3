# -*- coding: utf-8 -*-
"""
Readers and writers for the netpbm images used for dataset artifacts.

Files are written through Pillow in their raw variants: P4 (PBM), P5 (PGM,
maxval 255) and P6 (PPM).
"""

import numpy as np
from PIL import Image, UnidentifiedImageError

from lithosynth.util.exceptions import DatasetIOError


def _save(image, path, kind):
    try:
        image.save(path, format="PPM")
    except OSError as err:
        raise DatasetIOError(f"cannot write {kind} {path}: {err}") from err


def _open(path):
    try:
        with Image.open(path) as image:
            image.load()
            return image
    except (OSError, UnidentifiedImageError) as err:
        raise DatasetIOError(f"cannot read {path}: {err}") from err


def write_pgm(path, gray):
    """
    Writes an 8-bit grayscale image as binary PGM (P5, maxval 255).

    Parameters
    ----------
    path : str or path-like
        Destination file.
    gray : numpy.ndarray
        2-D array. ``uint8`` arrays are written as they are; floating arrays
        are taken to lie in [0, 1] and scaled to 0..255.
    """
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise ValueError(f"PGM needs a 2-D array, got shape {gray.shape}")
    if gray.dtype != np.uint8:
        gray = np.clip(np.rint(np.asarray(gray, dtype=float) * 255.0), 0, 255)
        gray = gray.astype(np.uint8)
    _save(Image.fromarray(np.ascontiguousarray(gray)), path, "PGM")


def write_pbm(path, mask):
    """Writes a boolean mask as binary PBM (P4). Foreground is black (1)."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError(f"PBM needs a 2-D array, got shape {mask.shape}")
    # mode "1" stores white as True; PBM bit 1 is black
    _save(Image.fromarray(np.ascontiguousarray(~mask)), path, "PBM")


def write_ppm(path, rgb):
    """Writes an ``(h, w, 3)`` uint8 array as binary PPM (P6)."""
    rgb = np.asarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"PPM needs an (h, w, 3) array, got shape {rgb.shape}")
    _save(Image.fromarray(np.ascontiguousarray(rgb)), path, "PPM")


def read_pgm(path):
    """Reads an 8-bit binary PGM into a ``uint8`` array."""
    image = _open(path)
    if image.format != "PPM" or image.mode != "L":
        raise DatasetIOError(f"{path} is not an 8-bit PGM")
    return np.array(image, dtype=np.uint8)


def read_pbm(path):
    """Reads a PBM into a boolean array, black pixels ``True``."""
    image = _open(path)
    if image.format != "PPM" or image.mode != "1":
        raise DatasetIOError(f"{path} is not a PBM")
    return ~np.array(image, dtype=bool)
