"""Standalone SVG figures for the report command.

Figures are built on bare :class:`matplotlib.figure.Figure` objects, so no
GUI backend or global pyplot state is involved. SVG output is made
byte-stable by dropping the date stamp and fixing the id hash salt.
"""

from __future__ import annotations

import io
from typing import Sequence

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from .io import atomic_write_bytes

_STYLE = {
    "svg.hashsalt": "loadlens",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def svg_bytes(fig: Figure) -> bytes:
    buf = io.BytesIO()
    with matplotlib.rc_context(_STYLE):
        fig.savefig(buf, format="svg", metadata={"Date": None}, bbox_inches="tight")
    return buf.getvalue()


def save_svg(fig: Figure, path) -> None:
    atomic_write_bytes(path, svg_bytes(fig))


def confusion_figure(confusion, class_names: Sequence[str], title: str = "Confusion matrix") -> Figure:
    conf = np.asarray(confusion, dtype=float)
    k = len(conf)
    with matplotlib.rc_context(_STYLE):
        fig = Figure(figsize=(1.2 + 0.7 * k, 1.0 + 0.6 * k))
        ax = fig.add_subplot()
        im = ax.imshow(conf, cmap="Blues", vmin=0)
        fig.colorbar(im, ax=ax, shrink=0.8)
        ticks = np.arange(k)
        ax.set_xticks(ticks, labels=class_names, rotation=45, ha="right")
        ax.set_yticks(ticks, labels=class_names)
        ax.set_xlabel("Predicted")
        ax.set_ylabel("True")
        ax.set_title(title)
        cut = conf.max() / 2 if conf.size else 0
        for i in range(k):
            for j in range(k):
                ax.text(j, i, f"{int(conf[i, j])}", ha="center", va="center",
                        color="white" if conf[i, j] > cut else "black")
    return fig


def shap_bar_figure(names: Sequence[str], scores: Sequence[float], title: str = "Mean |SHAP| (top features)") -> Figure:
    """Horizontal bars, largest at the top; input order is kept (expected descending)."""
    scores = np.asarray(scores, dtype=float)
    with matplotlib.rc_context(_STYLE):
        fig = Figure(figsize=(6.0, 0.8 + 0.35 * max(len(scores), 1)))
        ax = fig.add_subplot()
        pos = np.arange(len(scores))[::-1]
        ax.barh(pos, scores, color="#3b75af")
        ax.set_yticks(pos, labels=list(names))
        ax.set_xlabel("Attribution magnitude")
        ax.set_title(title)
    return fig


def roc_figure(fpr, tpr, auc: float | None, title: str = "ROC curve") -> Figure:
    with matplotlib.rc_context(_STYLE):
        fig = Figure(figsize=(4.2, 4.0))
        ax = fig.add_subplot()
        label = "model" if auc is None else f"AUC = {auc:.3f}"
        ax.plot(fpr, tpr, drawstyle="default", color="#3b75af", label=label)
        ax.plot([0, 1], [0, 1], ls="--", color="0.6", lw=0.8)
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.01)
        ax.set_xlabel("False positive rate")
        ax.set_ylabel("True positive rate")
        ax.set_title(title)
        ax.legend(loc="lower right", frameon=False)
    return fig
