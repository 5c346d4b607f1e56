"""Static SVG charts for fronts, envelopes and refinement traces.

Output is deterministic: SVG ids use a fixed hash salt and no date is
embedded, so identical inputs give identical files.
"""

from __future__ import annotations

import io
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import Envelope, ParetoFront  # noqa: E402
from .io import atomic_write_bytes  # noqa: E402

_STYLE = {"svg.hashsalt": "hse", "svg.fonttype": "none", "font.size": 9}


def _save(fig, path: str | Path) -> None:
    buf = io.BytesIO()
    with matplotlib.rc_context(_STYLE):
        fig.savefig(buf, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def _label(t) -> str:
    return f"{t.name} [{t.unit}]" if t.unit else t.name


def plot_fronts(fronts: Mapping[str, ParetoFront], path: str | Path,
                cloud: np.ndarray | None = None, axes: Sequence[int] = (0, 1),
                title: str | None = None) -> None:
    """Scatter of one or more fronts, each joined by a piecewise-linear line.

    ``cloud`` holds all evaluated target vectors (drawn grey underneath).
    Single-target fronts are drawn against their index.
    """
    with matplotlib.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 4.0))
        first = next(iter(fronts.values()), None)
        targets = first.targets if first is not None else ()
        one_d = len(targets) < 2
        i, j = (0, 0) if one_d else axes
        if cloud is not None and len(cloud) and not one_d:
            ax.scatter(cloud[:, i], cloud[:, j], s=8, color="0.8", label="evaluated", zorder=1)
        for k, (name, front) in enumerate(fronts.items()):
            vals = front.values()
            if not len(vals):
                continue
            color = f"C{k}"
            if one_d:
                ax.plot(np.arange(len(vals)), vals[:, 0], "o", color=color, label=name)
                continue
            order = np.lexsort((vals[:, j], vals[:, i]))
            ax.plot(vals[order, i], vals[order, j], "-o", ms=4, lw=1.2, color=color,
                    label=f"{name} ({len(vals)})", zorder=2)
        if targets:
            ax.set_xlabel("member" if one_d else _label(targets[i]))
            ax.set_ylabel(_label(targets[j]))
        if title:
            ax.set_title(title)
        ax.grid(True, lw=0.3)
        ax.legend(frameon=False)
    _save(fig, path)


def plot_envelope(env: Envelope, path: str | Path, title: str | None = None) -> None:
    """Band between best and worst case per group against the swept variable."""
    with matplotlib.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 4.0))
        x = np.asarray(env.grid, dtype=float)
        for k, g in enumerate(env.groups):
            lo = np.asarray(env.lower[g], dtype=float)
            hi = np.asarray(env.upper[g], dtype=float)
            color = f"C{k}"
            ax.fill_between(x, lo, hi, color=color, alpha=0.25, lw=0)
            ax.plot(x, env.best(g), color=color, lw=1.5, label=f"{g} best")
            ax.plot(x, env.worst(g), color=color, lw=0.8, ls="--", label=f"{g} worst")
        ax.set_xlabel(env.sweep)
        ax.set_ylabel(_label(env.target))
        if title:
            ax.set_title(title)
        ax.grid(True, lw=0.3)
        ax.legend(frameon=False)
    _save(fig, path)


def plot_trace(iterations: Sequence[int], accuracy: Sequence[float], threshold: float,
               path: str | Path) -> None:
    """Relative LOOCV error per refinement iteration against the threshold."""
    with matplotlib.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.5))
        ax.semilogy(iterations, accuracy, "-o", ms=4)
        ax.axhline(threshold, color="k", lw=0.8, ls="--", label="threshold")
        ax.set_xlabel("iteration")
        ax.set_ylabel("LOOCV-RMSE / target range")
        ax.grid(True, lw=0.3)
        ax.legend(frameon=False)
    _save(fig, path)
