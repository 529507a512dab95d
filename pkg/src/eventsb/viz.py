"""Renderings: per-bin red/blue event maps and loss-curve plots.

A histogram bin renders onto a black canvas with the red channel lit
wherever the bin's positive-polarity counts are nonzero and the blue
channel lit wherever the negative counts are nonzero (cells with both
polarities light both channels). Counting lit red/blue pixels therefore
recovers the nonzero-cell counts of the two polarity planes exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .events import EventHistogram


def render_bin(histogram: EventHistogram, bin_index: int) -> np.ndarray:
    """An (H, W, 3) uint8 image of one bin's polarity occupancy."""
    if not 0 <= bin_index < histogram.bins:
        raise ValueError(f"bin {bin_index} out of range [0, {histogram.bins})")
    pos = histogram.data[2 * bin_index]
    neg = histogram.data[2 * bin_index + 1]
    img = np.zeros(pos.shape + (3,), dtype=np.uint8)
    img[..., 0][pos > 0] = 255
    img[..., 2][neg > 0] = 255
    return img


def render_histogram(histogram: EventHistogram) -> list[np.ndarray]:
    """One image per bin."""
    return [render_bin(histogram, b) for b in range(histogram.bins)]


def parse_loss_csv(path):
    """Rows of the training loss log as a list of dicts.

    Raises DataFormatError with a 1-based line number on any malformed
    row; an empty log (no data rows) is malformed too.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise DataFormatError(f"{path}: empty loss CSV (line 1)")
    header = lines[0].split(",")
    expected = ["iteration", "t_i", "adv_g", "adv_d", "sb", "sc", "tc", "total"]
    if header != expected:
        raise DataFormatError(f"{path}: bad header {lines[0]!r} (line 1)")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(expected):
            raise DataFormatError(f"{path}: expected {len(expected)} cells (line {lineno})")
        try:
            row = {
                "iteration": int(cells[0]),
                "t_i": float(cells[1]),
                "adv_g": float(cells[2]),
                "adv_d": float(cells[3]),
                "sb": float(cells[4]),
                "sc": float(cells[5]),
                "tc": None if cells[6] == "skipped" else float(cells[6]),
                "total": float(cells[7]),
            }
        except ValueError as exc:
            raise DataFormatError(f"{path}: {exc} (line {lineno})") from exc
        rows.append(row)
    if not rows:
        raise DataFormatError(f"{path}: no data rows (line {len(lines)})")
    return rows


def plot_loss_curves(rows, out_path) -> None:
    """Write a PNG of every loss component over iterations."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    iterations = [r["iteration"] for r in rows]
    fig, ax = plt.subplots(figsize=(8, 5))
    for key in ("adv_g", "adv_d", "sb", "sc", "tc", "total"):
        values = [r[key] for r in rows]
        if all(v is None for v in values):
            continue
        ax.plot(iterations, [np.nan if v is None else v for v in values], label=key, linewidth=1)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_yscale("symlog")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def save_image(img: np.ndarray, out_path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.image

    matplotlib.image.imsave(out_path, img)
