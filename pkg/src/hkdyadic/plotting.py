"""Figures rendered next to the CSV outputs of the command-line tool."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps repeated runs byte-stable
_PNG_META = {"Software": None}


def _save(fig, path: Path):
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def plot_trace(trace: Sequence[dict], path, title: str = "") -> Path:
    """Best ratios of both estimators against the resolution ``K``."""
    path = Path(path)
    K = [row["K"] for row in trace]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(K, [row["ad_ratio"] for row in trace], "o-", label="averaging")
    ax.plot(K, [row["maxop_ratio"] for row in trace], "s--", label="maximal")
    ax.set_xlabel("resolution K")
    ax.set_ylabel("best ratio found")
    ax.set_xticks(K)
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    _save(fig, path)
    return path


def plot_profile(x: np.ndarray, curves: dict, path, title: str = "") -> Path:
    """Step profiles (cell midpoint against value) for one-dimensional data."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, y in curves.items():
        ax.step(x, y, where="mid", label=label)
    ax.set_xlabel("x")
    if title:
        ax.set_title(title)
    if len(curves) > 1:
        ax.legend(frameon=False)
    _save(fig, path)
    return path
