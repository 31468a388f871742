"""
Feature-map intensity tracing.

Forward hooks record the minimum and maximum over the whole feature volume
at chosen depths of a DRCT network. The G-index sums the absolute changes of
those extrema between consecutive taps; smaller values mean smoother
information flow through depth.
"""

import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd
import torch
import torch.nn as nn
from pandera.errors import SchemaError

from drct.core.config import TapLevel
from drct.core.exceptions import ArgumentError, DataLoadError, ValidationError
from drct.core.schemas import IntensityTraceSchema
from drct.model.network import DRCT

from .plot import TracePlotter

logger = logging.getLogger(__name__)

TAP_LEVELS = ("per_rdg", "per_sdrcb", "per_stage")
TRACE_COLUMNS = ['input_id', 'tap_name', 'layer_index', 'g_min', 'g_max']
_DEEP_CHAIN_TAP = re.compile(r'^(shallow|rdg\.\d+)$')


@dataclass(frozen=True)
class Tap:
    tap_name: str
    layer_index: int
    g_min: float
    g_max: float


@dataclass
class IntensityTrace:
    """Ordered per-tap (min, max) feature statistics for one input."""

    taps: List[Tap]
    input_id: str = "input"

    def __post_init__(self):
        previous = -1
        for tap in self.taps:
            if tap.g_min > tap.g_max:
                raise ValidationError(
                    f"tap '{tap.tap_name}' has g_min {tap.g_min} > "
                    f"g_max {tap.g_max}"
                )
            if tap.layer_index <= previous:
                raise ValidationError(
                    "layer_index must be strictly increasing, got "
                    f"{tap.layer_index} after {previous}"
                )
            previous = tap.layer_index

    def __len__(self) -> int:
        return len(self.taps)

    @property
    def names(self) -> List[str]:
        return [tap.tap_name for tap in self.taps]

    @property
    def extrema(self) -> List[Tuple[float, float]]:
        return [(tap.g_min, tap.g_max) for tap in self.taps]

    def subset(self, pattern: re.Pattern) -> "IntensityTrace":
        return IntensityTrace(
            [t for t in self.taps if pattern.match(t.tap_name)], self.input_id
        )

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {'input_id': self.input_id, 'tap_name': t.tap_name,
             'layer_index': t.layer_index, 'g_min': t.g_min, 'g_max': t.g_max}
            for t in self.taps
        ]
        return pd.DataFrame(rows, columns=TRACE_COLUMNS)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "IntensityTrace":
        input_id = str(frame['input_id'].iloc[0]) if len(frame) else "input"
        taps = [
            Tap(str(row.tap_name), int(row.layer_index), float(row.g_min),
                float(row.g_max))
            for row in frame.itertuples(index=False)
        ]
        return cls(taps, input_id)


def tap_modules(net: DRCT, tap_level: TapLevel = "per_rdg"
                ) -> List[Tuple[str, nn.Module]]:
    """
    Tap points in depth order: the shallow feature, the chosen level inside
    the RDG chain, and the feature after the body transition conv.
    """
    if tap_level not in TAP_LEVELS:
        raise ArgumentError(
            f"tap_level must be one of {list(TAP_LEVELS)}, got '{tap_level}'"
        )
    taps: List[Tuple[str, nn.Module]] = [('shallow', net.conv_first)]
    for i, group in enumerate(net.rdg):
        if tap_level == "per_rdg":
            taps.append((f'rdg.{i}', group))
            continue
        for m, block in enumerate(group.sdrcb):
            if tap_level == "per_sdrcb":
                taps.append((f'rdg.{i}.sdrcb.{m}', block))
                continue
            for j, stage in enumerate(block.stage):
                taps.append((f'rdg.{i}.sdrcb.{m}.stage.{j}', stage))
    taps.append(('post_transition', net.conv_after_body))
    return taps


def record_trace(net: DRCT, lr: torch.Tensor,
                 tap_level: TapLevel = "per_rdg",
                 input_id: str = "input") -> IntensityTrace:
    """
    Run one forward pass and capture feature extrema at every tap.

    Taps inside the RDG chain see window-padded features; they are cropped
    back to the input's spatial size before the extrema are taken.

    Raises:
        ArgumentError: If the tap level yields no tap points.
    """
    taps = tap_modules(net, tap_level)
    if not taps:
        raise ArgumentError("no tap points selected")
    names = {id(module): name for name, module in taps}
    h, w = lr.shape[-2:]
    captured: List[Tuple[str, float, float]] = []

    def hook(module, inputs, output):
        feature = output.detach()[..., :h, :w]
        captured.append((names[id(module)], float(feature.min().item()),
                         float(feature.max().item())))

    handles = [module.register_forward_hook(hook) for _, module in taps]
    try:
        net.eval()
        with torch.no_grad():
            net(lr)
    finally:
        for handle in handles:
            handle.remove()

    trace = IntensityTrace(
        [Tap(name, index, g_min, g_max)
         for index, (name, g_min, g_max) in enumerate(captured)],
        input_id,
    )
    logger.debug(f"Recorded {len(trace)} taps at level {tap_level}")
    return trace


def g_index(trace: Union[IntensityTrace, Sequence[Tuple[float, float]]]) -> float:
    """
    Sum over consecutive taps of |delta g_min| + |delta g_max|.

    Raises:
        ArgumentError: If fewer than two taps are given.
    """
    extrema = trace.extrema if isinstance(trace, IntensityTrace) else list(trace)
    if len(extrema) < 2:
        raise ArgumentError(
            f"G-index needs at least 2 taps, got {len(extrema)}"
        )
    terms = []
    for (min_a, max_a), (min_b, max_b) in zip(extrema, extrema[1:]):
        terms.append(abs(min_b - min_a))
        terms.append(abs(max_b - max_a))
    return math.fsum(terms)


def deep_chain_g_index(trace: IntensityTrace) -> float:
    """G-index over the shallow feature and the RDG outputs only."""
    return g_index(trace.subset(_DEEP_CHAIN_TAP))


def export_trace(trace: IntensityTrace, path: str, chart: bool = True,
                 compare: Optional[Dict[str, IntensityTrace]] = None
                 ) -> Dict[str, Path]:
    """
    Write a trace as TSV and, optionally, a PNG line chart next to it.

    Args:
        trace: Trace to export.
        path: TSV destination; the chart goes to the same stem with ``.png``.
        chart: Render the chart.
        compare: Additional labelled traces drawn on the same chart.

    Raises:
        DataLoadError: If the destination cannot be written.
    """
    table_path = Path(path)
    written: Dict[str, Path] = {}
    try:
        table_path.parent.mkdir(parents=True, exist_ok=True)
        frame = IntensityTraceSchema.validate(trace.to_frame())
        frame.to_csv(table_path, sep='\t', index=False)
        written['table'] = table_path
        if chart:
            traces = {trace.input_id: trace, **(compare or {})}
            plotter = TracePlotter()
            figure = plotter.create_intensity_chart(traces)
            written['chart'] = plotter.save(
                figure, table_path.with_suffix('.png')
            )
    except OSError as e:
        raise DataLoadError(f"Could not write trace to {table_path}: {e}",
                            path=str(table_path))
    return written


def read_trace(path: str) -> IntensityTrace:
    trace_path = Path(path)
    if not trace_path.is_file():
        raise DataLoadError(f"Trace file not found: {trace_path}",
                            path=str(trace_path))
    frame = pd.read_csv(trace_path, sep='\t', dtype={'input_id': str},
                        float_precision='round_trip')
    try:
        frame = IntensityTraceSchema.validate(frame)
    except SchemaError as e:
        raise ValidationError(f"Trace validation failed for {path}: {e}")
    return IntensityTrace.from_frame(frame)
