"""
Dataset ingestion: manifest scan, HR/LR pairing, patch sampling and
augmentation.

Directory layout::

    <root>/HR/*.png
    <root>/LR_bicubic/X{s}/<stem>.png      (optional, or <stem>x{s}.png)

LR files on disk take precedence; otherwise the LR image is synthesised with
the MATLAB-convention bicubic resampler.
"""

import hashlib
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from pandera.errors import SchemaError
from torch.utils.data import DataLoader, Dataset

from drct.core.config import AugmentationConfig, SUPPORTED_SCALES
from drct.core.exceptions import (
    ArgumentError,
    ConfigError,
    DataLoadError,
    ValidationError,
)
from drct.core.image import ImageTensor, ValueRange
from drct.core.loader import file_sha256, read_image, write_image
from drct.core.schemas import ManifestSchema
from drct.core.seeding import derived_rng

from .resize import bicubic_downscale

logger = logging.getLogger(__name__)

CACHE_ENV_VAR = 'DRCT_CACHE_DIR'
MANIFEST_COLUMNS = ['name', 'hr_path', 'lr_path', 'scale', 'split',
                    'hr_sha256']

ImagePair = Tuple[ImageTensor, ImageTensor]


@dataclass
class DatasetManifest:
    """Validated table of HR/LR entries for one root, scale and split."""

    frame: pd.DataFrame
    root: str
    scale: int
    split: str

    def __len__(self) -> int:
        return len(self.frame)

    def entries(self) -> Iterator[pd.Series]:
        for _, row in self.frame.iterrows():
            yield row

    @property
    def names(self) -> List[str]:
        return self.frame['name'].tolist()


@dataclass(frozen=True)
class PatchSpec:
    hr_patch: int
    scale: int

    def __post_init__(self):
        if self.scale not in SUPPORTED_SCALES:
            raise ConfigError(f"scale must be one of {SUPPORTED_SCALES}")
        if self.hr_patch % self.scale != 0:
            raise ConfigError(
                f"hr_patch {self.hr_patch} is not divisible by scale "
                f"{self.scale}"
            )

    @property
    def lr_patch(self) -> int:
        return self.hr_patch // self.scale


def _cache_dir(cache_dir: Optional[str]) -> Optional[Path]:
    location = cache_dir or os.environ.get(CACHE_ENV_VAR)
    return Path(location) if location else None


def _find_lr_file(root: Path, stem: str, scale: int) -> Optional[Path]:
    lr_dir = root / 'LR_bicubic' / f'X{scale}'
    for candidate in (lr_dir / f'{stem}.png', lr_dir / f'{stem}x{scale}.png'):
        if candidate.is_file():
            return candidate
    return None


def _manifest_cache_path(cache: Path, root: Path, scale: int,
                         split: str) -> Path:
    key = hashlib.sha256(
        f"{root.resolve()}|{scale}|{split}".encode('utf-8')
    ).hexdigest()[:16]
    return cache / f'manifest_{key}.tsv'


def _cache_is_fresh(cached: pd.DataFrame, cache_path: Path, root: Path,
                    hr_files: List[Path], scale: int) -> bool:
    """Stat-check a cached manifest against the HR and LR files on disk."""
    if cached['hr_path'].tolist() != [str(p) for p in hr_files]:
        return False
    written = cache_path.stat().st_mtime_ns
    if any(p.stat().st_mtime_ns >= written for p in hr_files):
        return False
    for hr_path, lr_path in zip(hr_files, cached['lr_path']):
        found = _find_lr_file(root, hr_path.stem, scale)
        if (str(found) if found else '') != lr_path:
            return False
    return True


def scan_manifest(root: str, scale: int, split: str = 'train',
                  cache_dir: Optional[str] = None) -> DatasetManifest:
    """
    Scan ``<root>/HR`` into a manifest stable-sorted by path.

    When a cache directory is given (or DRCT_CACHE_DIR is set) the manifest
    is stored there as TSV. It is reused while the HR listing and the LR file
    lookup are unchanged and no HR file is newer than the cache; otherwise
    the root is rescanned and the cache rewritten.

    Raises:
        DataLoadError: If the HR directory is missing or empty.
        ValidationError: If the manifest fails schema validation.
    """
    root_path = Path(root)
    hr_dir = root_path / 'HR'
    if not hr_dir.is_dir():
        raise DataLoadError(f"HR directory not found: {hr_dir}",
                            path=str(hr_dir))
    hr_files = sorted(hr_dir.glob('*.png'), key=lambda p: str(p))
    if not hr_files:
        raise DataLoadError(f"No PNG files in {hr_dir}", path=str(hr_dir))

    cache = _cache_dir(cache_dir)
    cache_path = None
    if cache is not None:
        cache_path = _manifest_cache_path(cache, root_path, scale, split)
        if cache_path.is_file():
            cached = pd.read_csv(cache_path, sep='\t', keep_default_na=False)
            if _cache_is_fresh(cached, cache_path, root_path, hr_files,
                               scale):
                cached['lr_path'] = cached['lr_path'].where(
                    cached['lr_path'] != '', None
                )
                logger.debug(f"Manifest cache hit: {cache_path}")
                return _validated(cached, root, scale, split)
            logger.debug(f"Manifest cache stale, rescanning: {cache_path}")

    rows = []
    for hr_path in hr_files:
        lr_path = _find_lr_file(root_path, hr_path.stem, scale)
        rows.append({
            'name': hr_path.stem,
            'hr_path': str(hr_path),
            'lr_path': str(lr_path) if lr_path else None,
            'scale': scale,
            'split': split,
            'hr_sha256': file_sha256(str(hr_path)),
        })
    frame = pd.DataFrame(rows, columns=MANIFEST_COLUMNS)
    manifest = _validated(frame, root, scale, split)

    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        manifest.frame.to_csv(cache_path, sep='\t', index=False)
    logger.info(f"✓ Manifest scanned: {len(manifest)} images from {root}")
    return manifest


def _validated(frame: pd.DataFrame, root: str, scale: int,
               split: str) -> DatasetManifest:
    try:
        frame = ManifestSchema.validate(frame)
    except SchemaError as e:
        raise ValidationError(f"Manifest validation failed for {root}: {e}")
    return DatasetManifest(frame.reset_index(drop=True), str(root), scale,
                           split)


def modcrop(img: ImageTensor, scale: int) -> ImageTensor:
    """Crop H and W down to multiples of ``scale``."""
    h = img.height - img.height % scale
    w = img.width - img.width % scale
    if h < 1 or w < 1:
        raise ValidationError(
            f"image {img.height}x{img.width} is smaller than scale {scale}"
        )
    return ImageTensor(img.data[..., :h, :w], img.value_range)


def load_pair(entry: pd.Series, scale: Optional[int] = None) -> ImagePair:
    """
    Load the (HR, LR) pair of a manifest entry.

    HR is mod-cropped to the scale; LR has exactly floor(HR / scale) pixels
    per axis.
    """
    scale = int(scale or entry['scale'])
    hr = modcrop(read_image(entry['hr_path']), scale)
    lr_path = entry.get('lr_path')
    if isinstance(lr_path, str) and lr_path:
        lr = read_image(lr_path)
        expected = (hr.height // scale, hr.width // scale)
        if (lr.height, lr.width) != expected:
            raise ValidationError(
                f"LR file {lr_path} is {lr.height}x{lr.width}, expected "
                f"{expected[0]}x{expected[1]} for HR {entry['hr_path']}"
            )
    else:
        lr = bicubic_downscale(hr, scale)
    return hr, lr


def augment(img: ImageTensor, hflip: bool, rotation: int) -> ImageTensor:
    """Horizontal flip then counter-clockwise rotation by a multiple of 90."""
    data = img.data
    if hflip:
        data = torch.flip(data, dims=[-1])
    k = (rotation // 90) % 4
    if k:
        data = torch.rot90(data, k, dims=[-2, -1])
    return ImageTensor(data.contiguous(), img.value_range)


def draw_augmentation(rng: np.random.Generator,
                      config: AugmentationConfig) -> Tuple[bool, int]:
    hflip = bool(config.hflip and rng.integers(0, 2))
    rotation = int(config.rotations[rng.integers(0, len(config.rotations))])
    return hflip, rotation


def sample_patch(pair: ImagePair, spec: PatchSpec, rng: np.random.Generator,
                 augmentation: Optional[AugmentationConfig] = None,
                 origin: Optional[Tuple[int, int]] = None
                 ) -> Optional[ImagePair]:
    """
    Cut aligned HR/LR patches from a pair.

    The crop origin is drawn in LR coordinates and multiplied by the scale,
    so the LR crop is exactly the HR crop divided by ``scale``. The same
    augmentation is applied to both patches.

    Returns:
        (hr_patch, lr_patch), or None when the HR image is smaller than the
        patch (the pair is skipped with a warning, never padded).
    """
    hr, lr = pair
    if hr.height < spec.hr_patch or hr.width < spec.hr_patch:
        logger.warning(
            f"⚠️ Skipping {hr.height}x{hr.width} image: smaller than "
            f"{spec.hr_patch}px patch"
        )
        return None
    lp = spec.lr_patch
    if origin is None:
        top = int(rng.integers(0, lr.height - lp + 1))
        left = int(rng.integers(0, lr.width - lp + 1))
    else:
        top, left = origin
    if top + lp > lr.height or left + lp > lr.width:
        raise ArgumentError(
            f"LR crop at ({top}, {left}) of size {lp} leaves the "
            f"{lr.height}x{lr.width} image"
        )
    s = spec.scale
    lr_patch = ImageTensor(
        lr.data[..., top:top + lp, left:left + lp], lr.value_range
    )
    hr_patch = ImageTensor(
        hr.data[..., top * s:top * s + spec.hr_patch,
                left * s:left * s + spec.hr_patch],
        hr.value_range,
    )
    if augmentation is not None:
        hflip, rotation = draw_augmentation(rng, augmentation)
        hr_patch = augment(hr_patch, hflip, rotation)
        lr_patch = augment(lr_patch, hflip, rotation)
    return hr_patch, lr_patch


class SRPatchDataset(Dataset):
    """
    Patch pairs drawn deterministically per sample index.

    Sample ``index`` of stage ``stage_index`` belongs to iteration
    ``index // batch_size`` and batch slot ``index % batch_size``; its image
    choice, crop and augmentation come from a generator keyed on
    (seed, stage_index, iteration, slot). Batches therefore do not depend on
    worker count or on where a run was resumed.
    """

    def __init__(self, pairs: Sequence[ImagePair], spec: PatchSpec,
                 batch_size: int, seed: int = 0,
                 augmentation: Optional[AugmentationConfig] = None,
                 stage_index: int = 0):
        self.spec = spec
        self.batch_size = batch_size
        self.seed = seed
        self.augmentation = augmentation
        self.stage_index = stage_index
        self.pairs = [
            pair for pair in pairs
            if pair[0].height >= spec.hr_patch and pair[0].width >= spec.hr_patch
        ]
        skipped = len(pairs) - len(self.pairs)
        if skipped:
            logger.warning(
                f"⚠️ Skipped {skipped} image(s) smaller than the "
                f"{spec.hr_patch}px patch"
            )
        if not self.pairs:
            raise DataLoadError(
                f"No training image is at least {spec.hr_patch}px on each side"
            )

    @classmethod
    def from_manifest(cls, manifest: DatasetManifest, spec: PatchSpec,
                      batch_size: int, seed: int = 0,
                      augmentation: Optional[AugmentationConfig] = None
                      ) -> "SRPatchDataset":
        pairs = [load_pair(entry, spec.scale) for entry in manifest.entries()]
        return cls(pairs, spec, batch_size, seed, augmentation)

    def __len__(self) -> int:
        return len(self.pairs)

    def sample(self, iteration: int, slot: int) -> Tuple[torch.Tensor, torch.Tensor]:
        rng = derived_rng(self.seed, self.stage_index, iteration, slot)
        pair = self.pairs[int(rng.integers(0, len(self.pairs)))]
        hr_patch, lr_patch = sample_patch(pair, self.spec, rng,
                                          self.augmentation)
        return lr_patch.data[0].float(), hr_patch.data[0].float()

    def __getitem__(self, index: int) -> Tuple[torch.Tensor, torch.Tensor]:
        iteration, slot = divmod(int(index), self.batch_size)
        return self.sample(iteration, slot)

    def batch(self, iteration: int) -> Tuple[torch.Tensor, torch.Tensor]:
        """(lr [B, C, p/s, p/s], hr [B, C, p, p]) for one iteration."""
        samples = [self.sample(iteration, slot)
                   for slot in range(self.batch_size)]
        lr = torch.stack([s[0] for s in samples])
        hr = torch.stack([s[1] for s in samples])
        return lr, hr


def make_loader(dataset: SRPatchDataset, start_iteration: int,
                end_iteration: int, num_workers: int = 0) -> DataLoader:
    """Batches for iterations [start_iteration, end_iteration) in order."""
    bs = dataset.batch_size
    indices = range(start_iteration * bs, end_iteration * bs)
    return DataLoader(dataset, batch_size=bs, sampler=indices,
                      num_workers=num_workers, shuffle=False)


def make_synthetic_corpus(root: str, count: int = 10, size: int = 96,
                          seed: int = 0) -> Path:
    """
    Write ``count`` smooth RGB PNGs of ``size`` x ``size`` to ``<root>/HR``.

    Each image is a sum of a few random low-frequency sinusoids plus a
    colour gradient, a learnable stand-in for natural images.
    """
    if count < 1 or size < 1:
        raise ArgumentError(
            f"synthetic corpus needs count >= 1 and size >= 1, "
            f"got {count}, {size}"
        )
    hr_dir = Path(root) / 'HR'
    hr_dir.mkdir(parents=True, exist_ok=True)
    yy, xx = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size),
                         indexing='ij')
    for i in range(count):
        rng = derived_rng(seed, i)
        channels = []
        for _ in range(3):
            value = rng.uniform(0.2, 0.8) + rng.uniform(-0.2, 0.2) * (xx - yy)
            for _ in range(3):
                fy, fx = rng.uniform(0.5, 4.0, size=2)
                phase = rng.uniform(0, 2 * np.pi)
                value = value + rng.uniform(0.03, 0.12) * np.sin(
                    2 * np.pi * (fy * yy + fx * xx) + phase
                )
            channels.append(value)
        array = np.clip(np.stack(channels), 0.0, 1.0)
        image = ImageTensor(torch.from_numpy(array).unsqueeze(0).float(),
                            ValueRange.UNIT)
        write_image(str(hr_dir / f'{i:04d}.png'), image)
    logger.info(f"✓ Synthetic corpus: {count} images of {size}px in {hr_dir}")
    return Path(root)
