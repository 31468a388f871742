"""DRCT network: Swin transformer layers, dense-residual blocks and the full model."""

from drct.model.network import (
    DRCT,
    ParameterRecord,
    build_model,
    load_model,
    count_parameters,
    parameter_breakdown,
    parameter_records,
    super_resolve,
)

__all__ = [
    "DRCT",
    "ParameterRecord",
    "build_model",
    "load_model",
    "count_parameters",
    "parameter_breakdown",
    "parameter_records",
    "super_resolve",
]
