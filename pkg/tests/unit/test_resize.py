#!/usr/bin/env python3
"""Unit tests for MATLAB-convention bicubic resampling."""

import sys
import unittest
from pathlib import Path

import numpy as np
import torch

# Add src directory to import path.
sys.path.insert(0, str(Path(__file__).parents[2] / "src"))

from drct.core.exceptions import ArgumentError
from drct.core.image import ImageTensor
from drct.data.resize import (
    bicubic_downscale,
    bicubic_weight,
    bicubic_weight_matrix,
    resize_bicubic,
)


class TestBicubicKernel(unittest.TestCase):

    def test_closed_form_values(self):
        self.assertAlmostEqual(bicubic_weight(0.5), 0.5625)
        self.assertEqual(bicubic_weight(0.0), 1.0)
        self.assertAlmostEqual(bicubic_weight(1.0), 0.0)
        self.assertAlmostEqual(bicubic_weight(1.5), -0.0625)
        self.assertEqual(bicubic_weight(2.0), 0.0)
        self.assertEqual(bicubic_weight(3.0), 0.0)

    def test_kernel_is_even(self):
        x = np.linspace(0, 2.5, 11)
        np.testing.assert_array_equal(bicubic_weight(x), bicubic_weight(-x))


class TestWeightMatrix(unittest.TestCase):

    def test_rows_sum_to_one(self):
        for in_size, out_size in [(16, 32), (32, 8), (17, 5), (5, 15), (7, 7)]:
            for antialias in (True, False):
                matrix = bicubic_weight_matrix(in_size, out_size, antialias)
                self.assertEqual(matrix.shape, (out_size, in_size))
                np.testing.assert_allclose(matrix.sum(axis=1), 1.0,
                                           atol=1e-12)

    def test_upscale_reproduces_interior_ramp(self):
        """Cubic convolution reproduces linear signals away from the edges."""
        matrix = bicubic_weight_matrix(16, 32)
        ramp = np.arange(1, 17, dtype=np.float64)
        out = matrix @ ramp
        u = np.arange(1, 33) / 2 + 0.25
        interior = (u >= 3) & (u <= 14)
        np.testing.assert_allclose(out[interior], u[interior], atol=1e-12)

    def test_half_downscale_averages_symmetric_taps(self):
        matrix = bicubic_weight_matrix(16, 8)
        # Output 4 (1-based) centres on input coordinate 7.5.
        row = matrix[3]
        np.testing.assert_allclose(row[6], row[7])
        np.testing.assert_allclose(row[5], row[8])

    def test_identity_size(self):
        np.testing.assert_allclose(bicubic_weight_matrix(9, 9), np.eye(9),
                                   atol=1e-12)

    def test_invalid_sizes(self):
        with self.assertRaises(ArgumentError):
            bicubic_weight_matrix(0, 4)


class TestResize(unittest.TestCase):

    def test_constant_image_preserved(self):
        img = ImageTensor(torch.full((1, 3, 20, 13), 0.5, dtype=torch.float64))
        for out_h, out_w in [(5, 3), (40, 26), (7, 30)]:
            out = resize_bicubic(img, out_h, out_w)
            self.assertEqual(tuple(out.shape), (1, 3, out_h, out_w))
            self.assertTrue(torch.allclose(out.data, torch.full_like(
                out.data, 0.5), atol=1e-12))

    def test_downscale_floors_dimensions(self):
        img = ImageTensor(torch.rand(1, 3, 17, 23))
        lr = bicubic_downscale(img, 4)
        self.assertEqual((lr.height, lr.width), (4, 5))
        self.assertEqual(lr.data.dtype, torch.float32)

    def test_resize_is_channel_independent(self):
        data = torch.rand(2, 3, 12, 12, dtype=torch.float64)
        whole = resize_bicubic(ImageTensor(data), 6, 6).data
        single = resize_bicubic(ImageTensor(data[1:2, 2:3]), 6, 6).data
        self.assertTrue(torch.allclose(whole[1:2, 2:3], single))

    def test_invalid_output_size(self):
        img = ImageTensor(torch.rand(1, 3, 4, 4))
        with self.assertRaises(ArgumentError):
            resize_bicubic(img, 0, 2)


if __name__ == '__main__':
    unittest.main()
