#!/usr/bin/env python3
"""Unit tests for manifest scanning, pairing and patch sampling."""

import sys
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd
import torch

# Add src directory to import path.
sys.path.insert(0, str(Path(__file__).parents[2] / "src"))

from drct.core.config import AugmentationConfig
from drct.core.exceptions import ConfigError, DataLoadError, ValidationError
from drct.core.image import ImageTensor
from drct.core.loader import file_sha256, write_image
from drct.data.dataset import (
    PatchSpec,
    SRPatchDataset,
    augment,
    load_pair,
    make_loader,
    make_synthetic_corpus,
    modcrop,
    sample_patch,
    scan_manifest,
)

from tests.support import random_image


def _coordinate_pair(size=48, scale=4):
    """HR encodes (row, col) per pixel; LR keeps every scale-th pixel."""
    rows = torch.arange(size).view(1, 1, size, 1).expand(1, 1, size, size)
    cols = torch.arange(size).view(1, 1, 1, size).expand(1, 1, size, size)
    hr = torch.cat([rows, cols, rows * 0], dim=1).float()
    lr = hr[..., ::scale, ::scale]
    return ImageTensor(hr.contiguous()), ImageTensor(lr.contiguous())


def _dihedral_variants(x):
    out = []
    for flip in (False, True):
        y = torch.flip(x, dims=[-1]) if flip else x
        out.extend(torch.rot90(y, k, dims=[-2, -1]) for k in range(4))
    return out


class TestManifest(unittest.TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)
        self.root = make_synthetic_corpus(str(self.tmp / "set"), count=3,
                                          size=32, seed=1)

    def tearDown(self):
        self._tmp.cleanup()

    def test_scan_sorted_by_path(self):
        manifest = scan_manifest(str(self.root), 4, "test")
        self.assertEqual(manifest.names, ["0000", "0001", "0002"])
        self.assertEqual(len(manifest), 3)
        self.assertTrue(manifest.frame["lr_path"].isna().all())
        self.assertTrue((manifest.frame["split"] == "test").all())
        self.assertEqual(len(manifest.frame["hr_sha256"].iloc[0]), 64)

    def test_lr_file_discovered_in_both_naming_styles(self):
        lr_dir = self.root / "LR_bicubic" / "X4"
        write_image(str(lr_dir / "0000.png"), random_image(8, 8))
        write_image(str(lr_dir / "0001x4.png"), random_image(8, 8))
        manifest = scan_manifest(str(self.root), 4)
        lr_paths = manifest.frame["lr_path"].tolist()
        self.assertTrue(lr_paths[0].endswith("0000.png"))
        self.assertTrue(lr_paths[1].endswith("0001x4.png"))
        self.assertTrue(pd.isna(lr_paths[2]))

    def test_cache_reused_while_listing_unchanged(self):
        cache = self.tmp / "cache"
        first = scan_manifest(str(self.root), 4, cache_dir=str(cache))
        self.assertEqual(len(list(cache.glob("manifest_*.tsv"))), 1)
        second = scan_manifest(str(self.root), 4, cache_dir=str(cache))
        self.assertEqual(first.names, second.names)
        self.assertTrue(second.frame["lr_path"].isna().all())

        make_synthetic_corpus(str(self.root), count=4, size=32, seed=1)
        third = scan_manifest(str(self.root), 4, cache_dir=str(cache))
        self.assertEqual(len(third), 4)

    def test_cache_rescanned_after_lr_added_and_hr_rewritten(self):
        cache = self.tmp / "cache"
        first = scan_manifest(str(self.root), 4, cache_dir=str(cache))
        old_sha = first.frame["hr_sha256"].iloc[0]

        lr_file = write_image(str(self.root / "LR_bicubic" / "X4" / "0000.png"),
                              random_image(8, 8))
        write_image(str(self.root / "HR" / "0000.png"),
                    random_image(32, 32, seed=7))
        second = scan_manifest(str(self.root), 4, cache_dir=str(cache))

        self.assertEqual(second.frame["lr_path"].iloc[0], str(lr_file))
        self.assertNotEqual(second.frame["hr_sha256"].iloc[0], old_sha)
        self.assertEqual(second.frame["hr_sha256"].iloc[0],
                         file_sha256(str(self.root / "HR" / "0000.png")))
        fresh = scan_manifest(str(self.root), 4)
        pd.testing.assert_frame_equal(second.frame, fresh.frame)

    def test_missing_hr_directory(self):
        with self.assertRaises(DataLoadError):
            scan_manifest(str(self.tmp / "nowhere"), 4)

    def test_load_pair_synthesises_lr(self):
        manifest = scan_manifest(str(self.root), 3)
        hr, lr = load_pair(next(manifest.entries()))
        self.assertEqual((hr.height, hr.width), (30, 30))
        self.assertEqual((lr.height, lr.width), (10, 10))

    def test_load_pair_rejects_mismatched_lr_file(self):
        write_image(str(self.root / "LR_bicubic" / "X4" / "0000.png"),
                    random_image(9, 8))
        manifest = scan_manifest(str(self.root), 4)
        with self.assertRaises(ValidationError):
            load_pair(next(manifest.entries()))


class TestPatchSampling(unittest.TestCase):

    def test_patch_spec_constraints(self):
        self.assertEqual(PatchSpec(64, 4).lr_patch, 16)
        with self.assertRaises(ConfigError):
            PatchSpec(63, 4)
        with self.assertRaises(ConfigError):
            PatchSpec(64, 5)

    def test_modcrop(self):
        cropped = modcrop(ImageTensor(torch.rand(1, 3, 17, 23)), 4)
        self.assertEqual((cropped.height, cropped.width), (16, 20))
        with self.assertRaises(ValidationError):
            modcrop(ImageTensor(torch.rand(1, 3, 3, 8)), 4)

    def test_lr_crop_is_hr_crop_divided_by_scale(self):
        pair = _coordinate_pair()
        spec = PatchSpec(16, 4)
        for seed in range(10):
            hr_patch, lr_patch = sample_patch(pair, spec,
                                              np.random.default_rng(seed))
            self.assertEqual(tuple(hr_patch.shape), (1, 3, 16, 16))
            self.assertEqual(tuple(lr_patch.shape), (1, 3, 4, 4))
            self.assertTrue(torch.equal(hr_patch.data[..., ::4, ::4],
                                        lr_patch.data))
            self.assertEqual(int(hr_patch.data[0, 0, 0, 0]) % 4, 0)

    def test_explicit_origin(self):
        hr, lr = _coordinate_pair()
        hr_patch, lr_patch = sample_patch((hr, lr), PatchSpec(16, 4),
                                          np.random.default_rng(0),
                                          origin=(2, 5))
        self.assertEqual(int(hr_patch.data[0, 0, 0, 0]), 8)
        self.assertEqual(int(hr_patch.data[0, 1, 0, 0]), 20)
        self.assertTrue(torch.equal(lr_patch.data, lr.data[..., 2:6, 5:9]))

    def test_same_augmentation_applied_to_both(self):
        pair = _coordinate_pair()
        spec = PatchSpec(16, 4)
        augmentation = AugmentationConfig()
        for seed in range(12):
            plain = sample_patch(pair, spec, np.random.default_rng(seed))
            aug = sample_patch(pair, spec, np.random.default_rng(seed),
                               augmentation)
            hr_variants = _dihedral_variants(plain[0].data)
            lr_variants = _dihedral_variants(plain[1].data)
            matches = [i for i, v in enumerate(hr_variants)
                       if torch.equal(v, aug[0].data)]
            self.assertTrue(matches)
            self.assertTrue(any(torch.equal(lr_variants[i], aug[1].data)
                                for i in matches))

    def test_augment_group_closure(self):
        img = ImageTensor(torch.rand(1, 3, 5, 7))
        twice = augment(augment(img, True, 0), True, 0)
        self.assertTrue(torch.equal(twice.data, img.data))
        turned = img
        for _ in range(4):
            turned = augment(turned, False, 90)
        self.assertTrue(torch.equal(turned.data, img.data))
        self.assertEqual(tuple(augment(img, False, 270).shape), (1, 3, 7, 5))

    def test_small_image_skipped_not_padded(self):
        pair = (ImageTensor(torch.rand(1, 3, 12, 40)),
                ImageTensor(torch.rand(1, 3, 3, 10)))
        with self.assertLogs("drct.data.dataset", level="WARNING"):
            result = sample_patch(pair, PatchSpec(16, 4),
                                  np.random.default_rng(0))
        self.assertIsNone(result)


class TestPatchDataset(unittest.TestCase):

    def setUp(self):
        self.pairs = [_coordinate_pair(48), _coordinate_pair(32)]
        self.spec = PatchSpec(16, 4)

    def test_samples_are_deterministic_per_slot(self):
        a = SRPatchDataset(self.pairs, self.spec, batch_size=2, seed=5,
                           augmentation=AugmentationConfig())
        b = SRPatchDataset(self.pairs, self.spec, batch_size=2, seed=5,
                           augmentation=AugmentationConfig())
        self.assertTrue(torch.equal(a.sample(7, 1)[1], b.sample(7, 1)[1]))
        self.assertTrue(torch.equal(a[15][0], b.sample(7, 1)[0]))
        slots = {a.sample(7, slot)[1].sum().item() for slot in range(6)}
        self.assertGreater(len(slots), 1)

    def test_stage_index_changes_stream(self):
        a = SRPatchDataset(self.pairs, self.spec, batch_size=2, seed=5)
        b = SRPatchDataset(self.pairs, self.spec, batch_size=2, seed=5,
                           stage_index=1)
        differs = any(not torch.equal(a.sample(i, 0)[1], b.sample(i, 0)[1])
                      for i in range(5))
        self.assertTrue(differs)

    def test_batch_shapes(self):
        dataset = SRPatchDataset(self.pairs, self.spec, batch_size=3)
        lr, hr = dataset.batch(0)
        self.assertEqual(tuple(lr.shape), (3, 3, 4, 4))
        self.assertEqual(tuple(hr.shape), (3, 3, 16, 16))

    def test_loader_matches_direct_batches(self):
        dataset = SRPatchDataset(self.pairs, self.spec, batch_size=2, seed=1)
        loaded = list(make_loader(dataset, 2, 5))
        self.assertEqual(len(loaded), 3)
        for offset, (lr, hr) in enumerate(loaded):
            expected_lr, expected_hr = dataset.batch(2 + offset)
            self.assertTrue(torch.equal(lr, expected_lr))
            self.assertTrue(torch.equal(hr, expected_hr))

    def test_small_images_filtered_with_warning(self):
        small = (ImageTensor(torch.rand(1, 3, 8, 8)),
                 ImageTensor(torch.rand(1, 3, 2, 2)))
        with self.assertLogs("drct.data.dataset", level="WARNING"):
            dataset = SRPatchDataset([small, self.pairs[0]], self.spec, 1)
        self.assertEqual(len(dataset), 1)

    def test_no_usable_image_raises(self):
        small = (ImageTensor(torch.rand(1, 3, 8, 8)),
                 ImageTensor(torch.rand(1, 3, 2, 2)))
        with self.assertRaises(DataLoadError):
            SRPatchDataset([small], self.spec, 1)


if __name__ == '__main__':
    unittest.main()
