"""SVG figures: line plots of paths and sweep curves, profit histograms.

Output is deterministic: matplotlib's SVG ids are salted with a constant and
the date stamp is dropped, so the same data yields the same bytes.
"""

from __future__ import annotations

import io
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {
    "svg.hashsalt": "dpfi",
    "svg.fonttype": "none",
    "figure.figsize": (6.4, 4.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _render(fig) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None}, bbox_inches="tight")
    plt.close(fig)
    return buf.getvalue()


def line_plot(x, series: dict, *, title: str = "", xlabel: str = "t", ylabel: str = "") -> bytes:
    """SVG bytes with one line per entry of ``series`` (label -> y values)."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for label, y in series.items():
            ax.plot(x, y, label=label, linewidth=1.5)
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if len(series) > 1:
            ax.legend(fontsize="small")
        return _render(fig)


def _hist_axes(ax, edges, counts, title):
    widths = [b - a for a, b in zip(edges[:-1], edges[1:])]
    ax.bar(edges[:-1], counts, width=widths, align="edge", edgecolor="black", linewidth=0.4)
    ax.set_title(title, fontsize="small")
    ax.ticklabel_format(axis="x", style="plain", useOffset=False)
    ax.tick_params(labelsize="x-small")


def histogram_plot(edges, counts, *, title: str = "", xlabel: str = "profit") -> bytes:
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        _hist_axes(ax, edges, counts, title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("draws")
        return _render(fig)


def histogram_grid(panels: list, *, title: str = "", ncols: int = 3) -> bytes:
    """Panels are (title, edges, counts), laid out row-wise."""
    nrows = max(1, math.ceil(len(panels) / ncols))
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(nrows, ncols, figsize=(3.2 * ncols, 2.4 * nrows), squeeze=False)
        for ax, (name, edges, counts) in zip(axes.flat, panels):
            _hist_axes(ax, edges, counts, name)
        for ax in list(axes.flat)[len(panels):]:
            ax.set_visible(False)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        return _render(fig)
