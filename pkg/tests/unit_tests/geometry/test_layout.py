# -*- coding: utf-8 -*-
"""
Tests for line-array and composite layout generation and library I/O.
"""

import os
import tempfile
import unittest

import numpy as np
from scipy import ndimage

from lithosynth.geometry.layout import (
    COMPOSITE_MAX_GAP,
    BinaryLayout,
    LayoutKind,
    LayoutSpec,
    LibraryConfig,
    build_library,
    count_components,
    load_layout,
    make_composite,
    make_line_array,
    read_library,
    save_layout,
    smallest_gap,
    write_library,
)
from lithosynth.util.exceptions import DatasetIOError, InvalidSpecError


def flood_fill_count(pixels):
    """Counts 8-connected foreground components with an explicit stack."""
    pixels = np.asarray(pixels, dtype=bool)
    seen = np.zeros_like(pixels)
    height, width = pixels.shape
    count = 0
    for row in range(height):
        for col in range(width):
            if not pixels[row, col] or seen[row, col]:
                continue
            count += 1
            stack = [(row, col)]
            seen[row, col] = True
            while stack:
                r, c = stack.pop()
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        rr, cc = r + dr, c + dc
                        if 0 <= rr < height and 0 <= cc < width:
                            if pixels[rr, cc] and not seen[rr, cc]:
                                seen[rr, cc] = True
                                stack.append((rr, cc))
    return count


class TestBinaryLayout(unittest.TestCase):
    def test_rejects_values_other_than_0_and_1(self):
        with self.assertRaises(ValueError):
            BinaryLayout(np.array([[0, 2]]))

    def test_rejects_1d(self):
        with self.assertRaises(ValueError):
            BinaryLayout(np.zeros(4))

    def test_is_immutable(self):
        layout = BinaryLayout.empty(4)
        with self.assertRaises(ValueError):
            layout.pixels[0, 0] = 1

    def test_does_not_alias_input(self):
        source = np.zeros((3, 3), dtype=np.uint8)
        layout = BinaryLayout(source)
        source[1, 1] = 1
        self.assertEqual(layout.count(), 0)

    def test_complement(self):
        layout = BinaryLayout(np.eye(3, dtype=np.uint8))
        self.assertEqual(layout.complement().count(), 6)
        self.assertEqual(layout.complement().complement(), layout)

    def test_equality_by_pixels(self):
        self.assertEqual(BinaryLayout.full(5), BinaryLayout(np.ones((5, 5), dtype=bool)))
        self.assertNotEqual(BinaryLayout.full(5), BinaryLayout.empty(5))
        self.assertNotEqual(BinaryLayout.empty(4), BinaryLayout.empty(4, 5))

    def test_sha256_follows_pixels(self):
        self.assertEqual(BinaryLayout.empty(8).sha256(), BinaryLayout.empty(8).sha256())
        self.assertNotEqual(BinaryLayout.empty(8).sha256(), BinaryLayout.full(8).sha256())


class TestLayoutSpec(unittest.TestCase):
    def test_pitch_must_exceed_width(self):
        with self.assertRaises(InvalidSpecError):
            LayoutSpec(id="H", kind=LayoutKind.HORIZONTAL, line_width=8, pitch=8)

    def test_composite_needs_seed(self):
        with self.assertRaises(InvalidSpecError):
            LayoutSpec(id="C", kind=LayoutKind.COMPOSITE)

    def test_default_phase_centres_line(self):
        spec = LayoutSpec(id="H", kind=LayoutKind.HORIZONTAL, line_width=4, pitch=10)
        self.assertEqual(spec.phase, 3)

    def test_dict_round_trip(self):
        spec = LayoutSpec(id="C07", kind=LayoutKind.COMPOSITE, seed=99)
        self.assertEqual(LayoutSpec.from_dict(spec.to_dict()), spec)


class Test_make_line_array(unittest.TestCase):
    def test_width_4_pitch_16_has_8_lines(self):
        spec = LayoutSpec(
            id="H", kind=LayoutKind.HORIZONTAL, line_width=4, pitch=16, offset=0
        )
        layout = make_line_array(spec)
        rows = [row for row in range(128) if row % 16 < 4]
        self.assertTrue((layout.pixels[rows, :] == 1).all())
        self.assertEqual(layout.count(), len(rows) * 128)
        self.assertEqual(count_components(layout.pixels), 8)
        self.assertEqual(flood_fill_count(layout.pixels), 8)

    def test_full_cover(self):
        spec = LayoutSpec(id="V", kind=LayoutKind.VERTICAL, line_width=128, pitch=129)
        layout = make_line_array(spec)
        self.assertEqual(layout, BinaryLayout.full(128))
        self.assertEqual(count_components(layout.pixels), 1)

    def test_one_pixel_lines(self):
        spec = LayoutSpec(id="H", kind=LayoutKind.HORIZONTAL, line_width=1, pitch=2)
        layout = make_line_array(spec)
        self.assertEqual(count_components(layout.pixels), 64)
        self.assertEqual(flood_fill_count(layout.pixels), 64)

    def test_vertical_is_transpose_of_horizontal(self):
        h = make_line_array(LayoutSpec(id="H", kind=LayoutKind.HORIZONTAL, line_width=5, pitch=12))
        v = make_line_array(LayoutSpec(id="V", kind=LayoutKind.VERTICAL, line_width=5, pitch=12))
        np.testing.assert_array_equal(h.pixels.T, v.pixels)

    def test_rejects_composite(self):
        with self.assertRaises(InvalidSpecError):
            make_line_array(LayoutSpec(id="C", kind=LayoutKind.COMPOSITE, seed=1))


class Test_make_composite(unittest.TestCase):
    def test_same_seed_same_layout(self):
        spec = LayoutSpec(id="C", kind=LayoutKind.COMPOSITE, seed=0)
        self.assertEqual(make_composite(spec), make_composite(spec))

    def test_at_least_two_components(self):
        for seed in range(20):
            layout = make_composite(LayoutSpec(id="C", kind=LayoutKind.COMPOSITE, seed=seed))
            self.assertTrue(np.isin(layout.pixels, (0, 1)).all())
            self.assertGreaterEqual(flood_fill_count(layout.pixels), 2)

    def test_strokes_stay_off_the_border(self):
        for seed in range(20):
            layout = make_composite(LayoutSpec(id="C", kind=LayoutKind.COMPOSITE, seed=seed))
            pixels = layout.pixels
            self.assertFalse(pixels[0, :].any() or pixels[-1, :].any())
            self.assertFalse(pixels[:, 0].any() or pixels[:, -1].any())

    def test_different_seeds_differ(self):
        differ = 0
        for ii in range(100):
            a = make_composite(LayoutSpec(id="C", kind=LayoutKind.COMPOSITE, seed=2 * ii + 1))
            b = make_composite(LayoutSpec(id="C", kind=LayoutKind.COMPOSITE, seed=2 * ii + 2))
            differ += a != b
        self.assertGreaterEqual(differ, 99)

    def test_two_components_close_enough_to_bridge(self):
        reach = np.ones((2 * COMPOSITE_MAX_GAP + 3,) * 2, dtype=bool)
        for seed in range(10):
            layout = make_composite(LayoutSpec(id="C", kind=LayoutKind.COMPOSITE, seed=seed))
            labels, count = ndimage.label(layout.pixels, structure=np.ones((3, 3)))
            close = False
            for label in range(1, count + 1):
                grown = ndimage.binary_dilation(labels == label, structure=reach)
                close |= bool((grown & (labels > 0) & (labels != label)).any())
            self.assertTrue(close, f"seed {seed}")


class Test_smallest_gap(unittest.TestCase):
    def test_columns_between_blocks(self):
        pixels = np.zeros((20, 30), dtype=np.uint8)
        pixels[5:10, 2:8] = 1
        pixels[5:10, 13:20] = 1
        self.assertEqual(smallest_gap(pixels), 5)

    def test_diagonal_neighbours_one_apart(self):
        pixels = np.zeros((10, 10), dtype=np.uint8)
        pixels[2, 2] = pixels[4, 4] = 1
        self.assertEqual(smallest_gap(pixels), 1)

    def test_nearest_pair_wins(self):
        pixels = np.zeros((40, 40), dtype=np.uint8)
        pixels[0:4, 0:4] = 1
        pixels[0:4, 20:24] = 1
        pixels[10:14, 20:24] = 1
        self.assertEqual(smallest_gap(pixels), 6)

    def test_single_component(self):
        self.assertIsNone(smallest_gap(BinaryLayout.full(8).pixels))
        self.assertIsNone(smallest_gap(BinaryLayout.empty(8).pixels))


class Test_build_library(unittest.TestCase):
    def test_default_library(self):
        library = build_library()
        self.assertEqual(len(library), 25)
        kinds = [spec.kind for spec, _ in library]
        self.assertEqual(kinds.count(LayoutKind.COMPOSITE), 15)
        self.assertEqual(kinds.count(LayoutKind.HORIZONTAL), 5)
        self.assertEqual(kinds.count(LayoutKind.VERTICAL), 5)
        self.assertEqual(len({spec.id for spec, _ in library}), 25)
        for _, layout in library:
            self.assertEqual(layout.shape, (128, 128))

    def test_single_horizontal(self):
        library = build_library(LibraryConfig(n_composite=0, n_horizontal=1, n_vertical=0))
        self.assertEqual(len(library), 1)
        self.assertIs(library[0][0].kind, LayoutKind.HORIZONTAL)

    def test_reproducible(self):
        first = build_library(LibraryConfig(master_seed=4))
        second = build_library(LibraryConfig(master_seed=4))
        self.assertEqual([s for s, _ in first], [s for s, _ in second])
        for (_, a), (_, b) in zip(first, second):
            self.assertEqual(a, b)

    def test_master_seed_changes_composites(self):
        first = build_library(LibraryConfig(master_seed=0, n_horizontal=0, n_vertical=0))
        second = build_library(LibraryConfig(master_seed=1, n_horizontal=0, n_vertical=0))
        self.assertTrue(any(a != b for (_, a), (_, b) in zip(first, second)))


class Test_write_library(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.library = build_library(LibraryConfig(n_composite=2, n_horizontal=1, n_vertical=1))

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip(self):
        write_library(self.tmp.name, self.library)
        restored = read_library(self.tmp.name)
        self.assertEqual([s for s, _ in restored], [s for s, _ in self.library])
        for (_, a), (_, b) in zip(restored, self.library):
            self.assertEqual(a, b)

    def test_tampered_layout_is_detected(self):
        write_library(self.tmp.name, self.library)
        spec, layout = self.library[0]
        save_layout(self.tmp.name, spec, layout.complement())
        with self.assertRaises(DatasetIOError):
            read_library(self.tmp.name)

    def test_missing_manifest(self):
        with self.assertRaises(DatasetIOError):
            read_library(self.tmp.name)

    def test_load_layout_rejects_gray(self):
        path = save_layout(self.tmp.name, *self.library[0])
        with open(path, "r+b") as handle:
            handle.seek(-1, os.SEEK_END)
            handle.write(b"\x7f")
        with self.assertRaises(DatasetIOError):
            load_layout(path)


if __name__ == "__main__":
    unittest.main()
