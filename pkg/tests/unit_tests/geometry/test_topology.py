# -*- coding: utf-8 -*-
"""
Tests for component labeling, irregularity, printed width and defect classes.
"""

import math
from types import SimpleNamespace
import unittest

import numpy as np

from lithosynth.geometry.layout import BinaryLayout
from lithosynth.geometry.morphology import PerturbationSpec, Window, perturb, square
from lithosynth.geometry.topology import (
    ClassifyConfig,
    DefectClass,
    boundary_pixels,
    classify,
    classify_rendered,
    delta_k,
    irregularity,
    label_components,
    local_width,
    measure_defect,
    minimum_width,
)
from lithosynth.util.exceptions import DimensionMismatchError, InvalidConfigError


def flood_fill_labels(pixels):
    """Breadth-first 8-connected labelling in raster order of first pixel."""
    pixels = np.asarray(pixels, dtype=bool)
    labels = np.zeros(pixels.shape, dtype=int)
    height, width = pixels.shape
    count = 0
    for row in range(height):
        for col in range(width):
            if not pixels[row, col] or labels[row, col]:
                continue
            count += 1
            labels[row, col] = count
            queue = [(row, col)]
            while queue:
                r, c = queue.pop(0)
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        rr, cc = r + dr, c + dc
                        if 0 <= rr < height and 0 <= cc < width:
                            if pixels[rr, cc] and not labels[rr, cc]:
                                labels[rr, cc] = count
                                queue.append((rr, cc))
    return labels, count


def line(size=30, top=10, width=4):
    pixels = np.zeros((size, size), dtype=np.uint8)
    pixels[top : top + width, :] = 1
    return BinaryLayout(pixels)


def v_notch(size=21, depth=14, apex=10):
    """Full grid with a V-shaped notch cut from the top edge."""
    rows, cols = np.mgrid[0:size, 0:size]
    return BinaryLayout(rows >= depth - np.abs(cols - apex))


class Test_label_components(unittest.TestCase):
    def test_matches_flood_fill(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            pixels = rng.random((24, 24)) < rng.uniform(0.1, 0.6)
            labeling = label_components(BinaryLayout(pixels))
            labels, count = flood_fill_labels(pixels)
            self.assertEqual(labeling.count, count)
            np.testing.assert_array_equal(labeling.labels, labels)

    def test_diagonal_touch_is_connected(self):
        pixels = np.zeros((5, 5), dtype=np.uint8)
        pixels[1, 1] = pixels[2, 2] = pixels[3, 1] = 1
        self.assertEqual(label_components(BinaryLayout(pixels)).count, 1)

    def test_checkerboard_is_one_component(self):
        pixels = (np.add.outer(np.arange(8), np.arange(8)) % 2).astype(np.uint8)
        self.assertEqual(label_components(BinaryLayout(pixels)).count, 1)

    def test_empty(self):
        labeling = label_components(BinaryLayout.empty(6))
        self.assertEqual(labeling.count, 0)
        self.assertFalse(labeling.labels.any())


class Test_delta_k(unittest.TestCase):
    def test_cut_line(self):
        a = line()
        pixels = a.pixels.copy()
        pixels[:, 15] = 0
        self.assertEqual(delta_k(a, BinaryLayout(pixels)), 1)

    def test_shape_mismatch(self):
        with self.assertRaises(DimensionMismatchError):
            delta_k(BinaryLayout.empty(4), BinaryLayout.empty(5))


class Test_boundary_pixels(unittest.TestCase):
    def test_block(self):
        mask = np.zeros((7, 7), dtype=bool)
        mask[1:6, 1:6] = True
        boundary = boundary_pixels(mask)
        self.assertEqual(int(boundary.sum()), 16)
        self.assertFalse(boundary[2:5, 2:5].any())

    def test_grid_edge_counts_as_background(self):
        self.assertEqual(int(boundary_pixels(np.ones((4, 4), dtype=bool)).sum()), 12)


class Test_irregularity(unittest.TestCase):
    def test_straight_cut_scores_zero(self):
        a = line()
        pixels = a.pixels.copy()
        pixels[:, 15] = 0
        window = Window(0, 0, 30, 30)
        self.assertEqual(irregularity(a, BinaryLayout(pixels), window), 0.0)

    def test_v_notch(self):
        a = BinaryLayout.full(21)
        score = irregularity(a, v_notch(), Window(0, 0, 21, 21))
        self.assertAlmostEqual(score, 1.0 - 1.0 / math.sqrt(2.0), places=9)

    def test_outside_window_is_ignored(self):
        a = BinaryLayout.full(21)
        self.assertEqual(irregularity(a, v_notch(), Window(0, 18, 21, 21)), 0.0)

    def test_no_new_boundary(self):
        a = line()
        self.assertEqual(irregularity(a, a, Window(0, 0, 30, 30)), 0.0)


class Test_classify(unittest.TestCase):
    def test_pinch(self):
        a = line()
        spec = PerturbationSpec(sigma=-1, se=square(2), target=(15, 11))
        self.assertIs(classify(a, perturb(a, spec), spec), DefectClass.PINCH)

    def test_pinch_below_irregularity_threshold(self):
        a = line()
        spec = PerturbationSpec(sigma=-1, se=square(2), target=(15, 11))
        strict = ClassifyConfig(irregularity_threshold=0.5)
        self.assertIs(classify(a, perturb(a, spec), spec, strict), DefectClass.NONE)

    def test_bridge(self):
        pixels = line().pixels.copy()
        pixels[20:24, :] = 1
        a = BinaryLayout(pixels)
        spec = PerturbationSpec(sigma=1, se=square(4), target=(15, 16))
        self.assertIs(classify(a, perturb(a, spec), spec), DefectClass.BRIDGE)

    def test_burr(self):
        a = line()
        spec = PerturbationSpec(sigma=1, se=square(2), target=(15, 8))
        defect_class, dk, area = measure_defect(a, perturb(a, spec), spec)
        self.assertIs(defect_class, DefectClass.BURR)
        self.assertEqual(dk, 0)
        self.assertEqual(area, 20)

    def test_small_burr_is_none(self):
        a = line()
        spec = PerturbationSpec(sigma=1, se=square(2), target=(15, 8))
        cfg = ClassifyConfig(burr_min_area=21)
        self.assertIs(classify(a, perturb(a, spec), spec, cfg), DefectClass.NONE)

    def test_isolated_dilation_is_none(self):
        a = line()
        spec = PerturbationSpec(sigma=1, se=square(1), target=(15, 25))
        self.assertIs(classify(a, perturb(a, spec), spec), DefectClass.NONE)

    def test_nibble_without_split_is_none(self):
        a = line()
        spec = PerturbationSpec(sigma=-1, se=square(1), target=(15, 9))
        self.assertIs(classify(a, perturb(a, spec), spec), DefectClass.NONE)

    def test_bad_thresholds(self):
        with self.assertRaises(InvalidConfigError):
            ClassifyConfig(irregularity_threshold=1.5)
        with self.assertRaises(InvalidConfigError):
            ClassifyConfig(burr_min_area=-1)


class Test_classify_rendered(unittest.TestCase):
    def test_rendered_bridge(self):
        b = SimpleNamespace(binary=np.zeros((10, 10), dtype=bool))
        b.binary[2:4, :] = b.binary[6:8, :] = True
        b_prime = SimpleNamespace(binary=b.binary.copy())
        b_prime.binary[4:6, 5] = True
        spec = PerturbationSpec(sigma=1, se=square(1), target=(5, 5))
        self.assertIs(classify_rendered(b, b_prime, spec), DefectClass.BRIDGE)


def necked_line(neck=2):
    """A 4-pixel horizontal line narrowed to `neck` pixels over columns 10..12."""
    pixels = np.zeros((16, 30), dtype=bool)
    pixels[5:9, :] = True
    pixels[5:9, 10:13] = False
    pixels[5 : 5 + neck, 10:13] = True
    return pixels


class Test_local_width(unittest.TestCase):
    def test_straight_line(self):
        pixels = np.zeros((16, 30), dtype=bool)
        pixels[5:9, :] = True
        widths = local_width(pixels)
        self.assertTrue((widths[pixels] == 4).all())
        self.assertFalse(widths[~pixels].any())

    def test_neck(self):
        widths = local_width(necked_line(neck=2))
        self.assertEqual(widths[5, 11], 2)
        self.assertEqual(widths[6, 11], 2)
        self.assertEqual(widths[5, 2], 4)

    def test_cap(self):
        pixels = np.ones((12, 12), dtype=bool)
        self.assertTrue((local_width(pixels, max_width=3) == 3).all())
        self.assertTrue((local_width(pixels) == 12).all())

    def test_single_pixel(self):
        pixels = np.zeros((5, 5), dtype=bool)
        pixels[2, 2] = True
        self.assertEqual(local_width(pixels)[2, 2], 1)


class Test_minimum_width(unittest.TestCase):
    def test_window_over_neck(self):
        for neck in (1, 2, 3):
            self.assertEqual(minimum_width(necked_line(neck), Window(8, 0, 15, 16)), neck)

    def test_window_away_from_neck(self):
        self.assertEqual(minimum_width(necked_line(1), Window(20, 0, 28, 16)), 4)

    def test_window_without_foreground(self):
        self.assertEqual(minimum_width(necked_line(), Window(0, 11, 30, 16)), 0)


if __name__ == "__main__":
    unittest.main()
