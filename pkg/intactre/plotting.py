"""
Precision/recall curves of one or more runs in a single figure.
"""

import logging
from pathlib import Path
from typing import Mapping, Optional

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # pylint: disable = wrong-import-position
import pandas as pd  # pylint: disable = wrong-import-position

from .utils import PathLike  # pylint: disable = wrong-import-position

logger = logging.getLogger(__name__)


def plot_curves(curves: Mapping[str, PathLike], out: PathLike, top_k: Optional[int] = None) -> Path:
    """
    Draw every ``pr_curve.csv`` in ``curves`` (label → path) into ``out``;
    the file format follows the suffix (``.png``, ``.svg``, ``.pdf``).
    """
    if not curves:
        raise ValueError("nothing to plot")
    target = Path(out)
    fig, ax = plt.subplots(figsize=(5, 4))
    try:
        for label, path in curves.items():
            frame = pd.read_csv(path)
            if list(frame.columns) != ["recall", "precision"]:
                raise ValueError(f"{path}: expected the columns recall,precision")
            if top_k is not None:
                frame = frame.iloc[:top_k]
            ax.plot(frame["recall"], frame["precision"], label=label)
        ax.set_xlabel("Recall")
        ax.set_ylabel("Precision")
        ax.set_ylim(0.0, 1.05)
        ax.grid(alpha=0.3)
        ax.legend(loc="upper right")
        fig.tight_layout()
        target.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(target)
    finally:
        plt.close(fig)
    logger.info("wrote %d curve(s) to %s", len(curves), target)
    return target
