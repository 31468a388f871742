"""
Pandera schemas for the tables drct reads and writes.
"""

from typing import Optional

import pandera.pandas as pa
from pandera.typing import Series


class ManifestSchema(pa.DataFrameModel):
    """Schema for a dataset manifest (one HR/LR pair per row)."""
    name: Series[str] = pa.Field(description="Image stem, used as report key")
    hr_path: Series[str] = pa.Field(
        unique=True, description="Path to the high-resolution PNG"
    )
    lr_path: Optional[Series[str]] = pa.Field(
        nullable=True,
        description="Path to a pre-generated LR PNG; empty means synthesize"
    )
    scale: Series[int] = pa.Field(isin=[2, 3, 4], description="Upscale factor")
    split: Series[str] = pa.Field(
        isin=["train", "val", "test"], description="Dataset split"
    )
    hr_sha256: Series[str] = pa.Field(description="Content hash of the HR file")

    class Config:
        coerce = True
        strict = False


class MetricReportSchema(pa.DataFrameModel):
    """Schema for per-image benchmark metrics."""
    name: Series[str] = pa.Field(unique=True, description="Image name")
    psnr: Series[float] = pa.Field(ge=0, le=100, description="PSNR in dB")
    ssim: Series[float] = pa.Field(ge=-1, le=1, description="SSIM")

    class Config:
        coerce = True
        strict = True


class IntensityTraceSchema(pa.DataFrameModel):
    """Schema for a feature-map intensity trace (one row per tap)."""
    input_id: Series[str] = pa.Field(description="Traced input identifier")
    tap_name: Series[str] = pa.Field(description="Tap point name")
    layer_index: Series[int] = pa.Field(ge=0, description="Depth index")
    g_min: Series[float] = pa.Field(description="Feature minimum")
    g_max: Series[float] = pa.Field(description="Feature maximum")

    class Config:
        coerce = True
        strict = True


class MetricLogSchema(pa.DataFrameModel):
    """Schema for the line-delimited training metric log."""
    iteration: Series[int] = pa.Field(ge=0)
    stage: Series[str] = pa.Field(
        isin=["pretrain", "l1_finetune", "l2_polish"]
    )
    lr: Series[float] = pa.Field(ge=0)
    loss: Series[float] = pa.Field(nullable=True)
    val_psnr: Series[float] = pa.Field(nullable=True)

    class Config:
        coerce = True
        strict = False


class ParameterIndexSchema(pa.DataFrameModel):
    """Schema for the parameter index stored in a checkpoint envelope."""
    name: Series[str] = pa.Field(unique=True)
    shape: Series[str] = pa.Field(description="Comma-separated dimensions")
    offset: Series[int] = pa.Field(ge=0, description="Element offset")
    count: Series[int] = pa.Field(ge=0, description="Element count")

    class Config:
        coerce = True
        strict = True
