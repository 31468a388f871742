"""
Benchmark protocol: x8 self-ensemble, per-image PSNR/SSIM with a 2*scale
border crop, and report tables.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import pandas as pd
import torch
import yaml
from pandera.errors import SchemaError

from drct.core.exceptions import DRCTError, ValidationError
from drct.core.image import ImageTensor, ValueRange
from drct.core.loader import write_image
from drct.core.schemas import MetricReportSchema
from drct.data.dataset import DatasetManifest, load_pair

from .metrics import psnr, ssim

logger = logging.getLogger(__name__)

Forward = Callable[[torch.Tensor], torch.Tensor]

# (rotation k, horizontal flip) for the eight dihedral transforms.
DIHEDRAL = [(k, flip) for k in range(4) for flip in (False, True)]


def dihedral_transform(x: torch.Tensor, k: int, flip: bool) -> torch.Tensor:
    if flip:
        x = torch.flip(x, dims=[-1])
    return torch.rot90(x, k, dims=[-2, -1])


def dihedral_inverse(x: torch.Tensor, k: int, flip: bool) -> torch.Tensor:
    x = torch.rot90(x, -k, dims=[-2, -1])
    if flip:
        x = torch.flip(x, dims=[-1])
    return x


def _forward_fn(net: Union[torch.nn.Module, Forward]) -> Forward:
    if isinstance(net, torch.nn.Module):
        param = next(net.parameters(), None)

        def run(x: torch.Tensor) -> torch.Tensor:
            net.eval()
            if param is not None:
                x = x.to(dtype=param.dtype, device=param.device)
            with torch.no_grad():
                return net(x).cpu()
        return run
    return net


def self_ensemble_branches(net: Union[torch.nn.Module, Forward],
                           lr: torch.Tensor) -> List[torch.Tensor]:
    """SR output of each dihedral branch, mapped back to the input frame."""
    forward = _forward_fn(net)
    return [
        dihedral_inverse(forward(dihedral_transform(lr, k, flip)), k, flip)
        for k, flip in DIHEDRAL
    ]


def self_ensemble(net: Union[torch.nn.Module, Forward],
                  lr: Union[ImageTensor, torch.Tensor]
                  ) -> Union[ImageTensor, torch.Tensor]:
    """
    Average of the network output over the eight dihedral transforms
    (four rotations, each with and without a horizontal flip) of ``lr``.
    """
    data = lr.data if isinstance(lr, ImageTensor) else lr
    branches = self_ensemble_branches(net, data)
    mean = torch.stack(branches).mean(dim=0)
    if isinstance(lr, ImageTensor):
        return ImageTensor(mean, ValueRange.UNIT)
    return mean


def single_pass(net: Union[torch.nn.Module, Forward],
                lr: ImageTensor) -> ImageTensor:
    return ImageTensor(_forward_fn(net)(lr.data), ValueRange.UNIT)


@dataclass
class MetricReport:
    """Per-image and aggregate metrics for one benchmark set."""

    dataset: str
    scale: int
    per_image: pd.DataFrame
    crop_pixels: int
    channel_mode: str = 'rgb_full'
    tta: bool = False
    skipped: List[Tuple[str, str]] = field(default_factory=list)

    @property
    def mean_psnr(self) -> float:
        return float(self.per_image['psnr'].mean())

    @property
    def mean_ssim(self) -> float:
        return float(self.per_image['ssim'].mean())

    @property
    def aggregate(self) -> Dict[str, float]:
        return {'psnr': self.mean_psnr, 'ssim': self.mean_ssim}

    def format_table(self) -> str:
        lines = [
            f"{self.dataset} x{self.scale} "
            f"(crop {self.crop_pixels}px, {self.channel_mode}"
            f"{', TTA x8' if self.tta else ''})",
            self.per_image.to_string(index=False, float_format='%.4f'),
            f"Mean PSNR: {self.mean_psnr:.4f} dB  "
            f"Mean SSIM: {self.mean_ssim:.4f}",
        ]
        if self.skipped:
            lines.append(f"Skipped {len(self.skipped)} image(s):")
            lines.extend(f"  {name}: {reason}" for name, reason in self.skipped)
        return '\n'.join(lines)

    def save(self, out_dir: str) -> Dict[str, Path]:
        """Write ``<dataset>_metrics.tsv`` and ``<dataset>_summary.yaml``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        table_path = out / f'{self.dataset}_metrics.tsv'
        summary_path = out / f'{self.dataset}_summary.yaml'
        self.per_image.to_csv(table_path, sep='\t', index=False)
        summary = {
            'dataset': self.dataset,
            'scale': self.scale,
            'crop_pixels': self.crop_pixels,
            'channel_mode': self.channel_mode,
            'tta': self.tta,
            'images': len(self.per_image),
            'psnr': self.mean_psnr,
            'ssim': self.mean_ssim,
            'skipped': [{'name': n, 'reason': r} for n, r in self.skipped],
        }
        with open(summary_path, 'w', encoding='utf-8') as f:
            yaml.safe_dump(summary, f, sort_keys=False)
        return {'table': table_path, 'summary': summary_path}


def run_benchmark(net: Union[torch.nn.Module, Forward],
                  manifest: DatasetManifest, scale: int, tta: bool = False,
                  dataset: Optional[str] = None,
                  sr_dir: Optional[str] = None) -> MetricReport:
    """
    Evaluate every manifest entry with a 2*scale border crop.

    Entries whose files cannot be loaded or measured are listed in
    ``MetricReport.skipped`` and left out of the aggregate.
    """
    crop = 2 * scale
    name = dataset or Path(manifest.root).name
    rows = []
    skipped: List[Tuple[str, str]] = []
    for entry in manifest.entries():
        try:
            hr, lr = load_pair(entry, scale)
            sr = self_ensemble(net, lr) if tta else single_pass(net, lr)
            sr = ImageTensor(sr.data.clamp(0, 1), ValueRange.UNIT)
            rows.append({
                'name': entry['name'],
                'psnr': psnr(sr, hr, crop),
                'ssim': ssim(sr, hr, crop),
            })
            if sr_dir:
                write_image(str(Path(sr_dir) / f"{entry['name']}.png"), sr)
        except DRCTError as e:
            logger.warning(f"⚠️ Skipping {entry['name']}: {e}")
            skipped.append((str(entry['name']), str(e)))

    per_image = pd.DataFrame(rows, columns=['name', 'psnr', 'ssim'])
    if rows:
        try:
            per_image = MetricReportSchema.validate(per_image)
        except SchemaError as e:
            raise ValidationError(f"Metric report validation failed: {e}")
    report = MetricReport(name, scale, per_image, crop, tta=tta,
                          skipped=skipped)
    logger.info(f"✓ {name}: {len(rows)} image(s), PSNR {report.mean_psnr:.4f}"
                f" dB, SSIM {report.mean_ssim:.4f}")
    return report


def benchmark_table(reports: Dict[str, MetricReport], method: str,
                    training_label: str, scale: int) -> pd.DataFrame:
    """One comparison row with a PSNR/SSIM column per benchmark set."""
    row = {'Method': method, 'Scale': f'x{scale}', 'Training': training_label}
    for name, report in reports.items():
        row[name] = f"{report.mean_psnr:.2f}/{report.mean_ssim:.4f}"
    return pd.DataFrame([row])
