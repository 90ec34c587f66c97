"""Flowpic construction: packet series -> 2D time x size count matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import MAX_PACKET_SIZE, PacketSeries

DEFAULT_WINDOW = 15.0


@dataclass(frozen=True)
class Flowpic:
    """resolution x resolution packet-count matrix over a fixed time window.

    Rows are packet-size bins (row 0 = smallest sizes), columns are time
    bins (column 0 = earliest).
    """

    resolution: int
    window: float
    counts: np.ndarray


def build_flowpic(series: PacketSeries, resolution: int = 32,
                  window: float = DEFAULT_WINDOW) -> Flowpic:
    """Bin packets with timestamp in [0, window) into a counts matrix.

    Bin widths are exactly window/resolution seconds and 1500/resolution
    bytes; a packet of exactly 1500 bytes is clamped into the last size row.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if window <= 0:
        raise ValueError("window must be positive")
    counts = np.zeros((resolution, resolution), dtype=np.int64)
    if len(series) > 0:
        t = series.timestamps
        s = series.sizes
        mask = (t >= 0) & (t < window)
        rows = np.minimum(s[mask] * resolution // MAX_PACKET_SIZE, resolution - 1)
        cols = np.minimum((t[mask] * resolution / window).astype(np.int64), resolution - 1)
        np.add.at(counts, (rows, cols), 1)
    return Flowpic(resolution, window, counts)


def to_model_input(fp: Flowpic, normalization: str = "raw") -> np.ndarray:
    """Convert counts to a real matrix: raw cast or unit-max scaling to [0,1]."""
    counts = fp.counts.astype(np.float32)
    if normalization == "raw":
        return counts
    if normalization == "unit_max":
        return counts / max(counts.max(), 1.0)
    raise ValueError(f"unknown normalization {normalization!r}")


def export_csv(fp: Flowpic, path) -> None:
    """Debug export of the counts matrix as CSV."""
    np.savetxt(path, fp.counts, fmt="%d", delimiter=",")


def export_pgm(fp: Flowpic, path) -> None:
    """Debug export as a binary grayscale PGM, scaled to the max count."""
    peak = max(int(fp.counts.max()), 1)
    pixels = (fp.counts * 255 // peak).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{fp.resolution} {fp.resolution}\n255\n".encode())
        fh.write(pixels.tobytes())
