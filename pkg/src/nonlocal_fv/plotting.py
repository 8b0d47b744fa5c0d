"""Static SVG line plots with byte-stable output."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


class PlotError(ValueError):
    pass


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray


def emit_svg_plot(series: Sequence[Series], xlabel: str, ylabel: str,
                  path: Union[str, Path], title: str = "") -> Path:
    """One polyline per series with a legend; identical input gives identical bytes."""
    if not series:
        raise PlotError("nothing to plot")
    for s in series:
        if len(s.x) != len(s.y) or len(s.x) == 0:
            raise PlotError(f"series {s.label!r}: x and y must be nonempty and of equal length")

    path = Path(path)
    with matplotlib.rc_context({"svg.hashsalt": "nonlocal-fv", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for s in series:
            ax.plot(np.asarray(s.x), np.asarray(s.y), label=s.label, linewidth=1.2)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend()
        ax.grid(True, linewidth=0.3)
        fig.tight_layout()
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
