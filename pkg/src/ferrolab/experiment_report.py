import logging
from pathlib import Path
from typing import Dict, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

logger = logging.getLogger(__name__)

# Stable element ids so identical data gives identical SVG files
plt.rcParams["svg.hashsalt"] = "ferrolab"


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info("Wrote plot %s", path)
    return path


def line_chart(series: Dict[str, Sequence[float]], path: Path, x: Optional[Sequence[float]] = None,
               title: str = "", xlabel: str = "", ylabel: str = "") -> Path:
    """
    Plot one or more series as lines and save the figure as SVG.

    Args:
        series: Label to values; every series shares the x axis
        path: Output file
        x: Shared x values; sample index when None
    """
    fig, ax = plt.subplots(figsize=(10, 6))
    for label, values in series.items():
        ax.plot(x if x is not None else range(len(values)), values, label=label, linewidth=1)
    ax.set_title(title, weight="bold")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    if len(series) > 1:
        ax.legend()
    return _save(fig, path)


def plot_log(frame: pd.DataFrame, path: Path, indicators: Sequence[str] = ("zc11", "zc22")) -> Path:
    """Indicators of a bench log against simulated time."""
    return line_chart({name.upper(): frame[name] for name in indicators}, path, x=frame["t_s"],
                      title="Collapsed impedance", xlabel="t (s)", ylabel="Z^C (Ω)")


def plot_hysteresis(frame: pd.DataFrame, path: Path, indicator: str = "zc11") -> Path:
    """Indicator against applied bias for a sweep log."""
    fig, ax = plt.subplots(figsize=(8, 6))
    ax.plot(frame["bias_v"], frame[indicator], linewidth=0.6)
    ax.set_title(f"{indicator.upper()} hysteresis", weight="bold")
    ax.set_xlabel("V_P (V)")
    ax.set_ylabel(f"{indicator.upper()} (Ω)")
    ax.grid(True, alpha=0.3)
    return _save(fig, path)
