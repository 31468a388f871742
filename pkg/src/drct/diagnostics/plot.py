"""
Intensity-trace charts.

Figures are built with the object-oriented matplotlib API on an Agg canvas,
so no display or global pyplot state is involved.
"""

from pathlib import Path
from typing import Dict, List, Protocol, Tuple

from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure


class TraceLike(Protocol):
    names: List[str]
    extrema: List[Tuple[float, float]]


class TracePlotter:
    """Line charts of feature-map minimum and maximum against depth."""

    def __init__(self, width: float = 8.0, height: float = 4.5, dpi: int = 120):
        self.width = width
        self.height = height
        self.dpi = dpi

    def create_intensity_chart(
        self,
        traces: Dict[str, TraceLike],
        title: str = "Feature map intensity",
    ) -> Figure:
        """
        One chart with a g_max and a g_min line per labelled trace.

        The x axis carries one tick per tap of the longest trace.
        """
        figure = Figure(figsize=(self.width, self.height), dpi=self.dpi)
        FigureCanvasAgg(figure)
        ax = figure.add_subplot(1, 1, 1)

        longest = max(traces.values(), key=lambda t: len(t.names))
        for label, trace in traces.items():
            positions = list(range(len(trace.names)))
            lows = [low for low, _ in trace.extrema]
            highs = [high for _, high in trace.extrema]
            line, = ax.plot(positions, highs, marker='o', label=f"{label} max")
            ax.plot(positions, lows, marker='o', linestyle='--',
                    color=line.get_color(), label=f"{label} min")

        ax.set_xticks(range(len(longest.names)))
        ax.set_xticklabels(longest.names, rotation=45, ha='right')
        ax.set_xlabel("Tap")
        ax.set_ylabel("Intensity")
        ax.set_title(title)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize='small')
        figure.tight_layout()
        return figure

    def save(self, figure: Figure, path: Path) -> Path:
        out_path = Path(path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        figure.savefig(out_path, format='png')
        return out_path
