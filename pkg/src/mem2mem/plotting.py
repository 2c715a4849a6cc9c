"""Heatmaps of the memory write attention ``A`` and read attention ``Ψ``."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _heatmap(matrix: np.ndarray, path, title: str, xlabel: str, ylabel: str) -> Path:
    matrix = np.asarray(matrix, dtype=np.float64)
    rows, cols = matrix.shape
    fig, ax = plt.subplots(figsize=(max(3.0, 0.35 * cols + 1.5), max(2.0, 0.35 * rows + 1.2)))
    im = ax.imshow(matrix, aspect="auto", cmap="viridis", vmin=0.0, vmax=max(1e-12, float(matrix.max())))
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_yticks(range(rows))
    if cols <= 40:
        ax.set_xticks(range(cols))
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_write_attention(A: np.ndarray, path) -> Path:
    """Rows are memory heads, columns input sentences."""
    return _heatmap(A, path, "memory write attention A", "sentence", "head")


def plot_read_attention(psi: np.ndarray, path) -> Path:
    """Rows are memory slots, columns decoding steps."""
    return _heatmap(psi, path, "memory read attention Ψ", "decoding step", "slot")
