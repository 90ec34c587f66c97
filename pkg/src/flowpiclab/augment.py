"""Augmentations on packet time series and flowpic images.

Three time-series transforms (change_rtt, time_shift, packet_loss), three
image transforms (rotate, horizontal_flip, color_jitter), plus noaug.
All draws come from a caller-supplied numpy Generator, so every function
is deterministic given (input, spec, rng state).
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .dataio import PacketSeries
from .flowpic import Flowpic, build_flowpic, to_model_input

TIMESERIES_KINDS = ("change_rtt", "time_shift", "packet_loss")
IMAGE_KINDS = ("rotate", "horizontal_flip", "color_jitter")
KINDS = ("noaug",) + TIMESERIES_KINDS + IMAGE_KINDS


@dataclass(frozen=True)
class AugmentationSpec:
    """One augmentation kind plus its sampling parameters."""

    kind: str
    alpha_lo: float = 0.5      # change_rtt: time-scale factor ~ U[lo, hi]
    alpha_hi: float = 1.5
    b_lo: float = -1.0         # time_shift: offset seconds ~ U[lo, hi]
    b_hi: float = 1.0
    p: float = 0.01            # packet_loss: independent drop probability
    max_degrees: float = 10.0  # rotate: angle ~ U[-max, +max]
    brightness_delta: float = 0.5
    contrast_delta: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown augmentation kind {self.kind!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must be in [0, 1]")
        if self.alpha_lo <= 0:
            raise ValueError("alpha_lo must be positive")
        if self.alpha_hi < self.alpha_lo or self.b_hi < self.b_lo:
            raise ValueError("empty parameter interval")

    @property
    def is_timeseries(self) -> bool:
        return self.kind in TIMESERIES_KINDS

    @property
    def is_image(self) -> bool:
        return self.kind in IMAGE_KINDS

    def to_dict(self) -> dict:
        d = asdict(self)
        return {"kind": d.pop("kind"), "params": d}

    @classmethod
    def from_dict(cls, obj: dict) -> "AugmentationSpec":
        return cls(obj["kind"], **obj.get("params", {}))


def apply_timeseries(series: PacketSeries, spec: AugmentationSpec,
                     rng: np.random.Generator) -> PacketSeries:
    """Apply a time-series augmentation; packet sizes are never altered."""
    if spec.kind == "noaug":
        return series
    if spec.kind == "change_rtt":
        alpha = rng.uniform(spec.alpha_lo, spec.alpha_hi)
        return PacketSeries(series.timestamps * alpha, series.sizes, series.directions)
    if spec.kind == "time_shift":
        b = rng.uniform(spec.b_lo, spec.b_hi)
        t = series.timestamps + b
        keep = t >= 0  # packets shifted before t=0 are dropped
        return PacketSeries(
            t[keep], series.sizes[keep],
            None if series.directions is None else series.directions[keep],
        )
    if spec.kind == "packet_loss":
        keep = rng.random(len(series)) >= spec.p
        return PacketSeries(
            series.timestamps[keep], series.sizes[keep],
            None if series.directions is None else series.directions[keep],
        )
    raise ValueError(f"{spec.kind!r} is not a time-series augmentation")


def apply_image(matrix: np.ndarray, spec: AugmentationSpec,
                rng: np.random.Generator) -> np.ndarray:
    """Apply an image augmentation to a flowpic matrix."""
    if spec.kind == "noaug":
        return matrix
    if spec.kind == "horizontal_flip":
        return matrix[:, ::-1].copy()
    if spec.kind == "rotate":
        theta = rng.uniform(-spec.max_degrees, spec.max_degrees)
        return _rotate_nearest(matrix, theta)
    if spec.kind == "color_jitter":
        contrast = rng.uniform(1 - spec.contrast_delta, 1 + spec.contrast_delta)
        brightness = rng.uniform(-spec.brightness_delta, spec.brightness_delta)
        vmax = float(matrix.max())
        out = contrast * matrix.astype(np.float64) + brightness * vmax
        return np.maximum(out, 0.0)
    raise ValueError(f"{spec.kind!r} is not an image augmentation")


def _rotate_nearest(matrix: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate about the image center, nearest-neighbor, zero fill."""
    if degrees == 0.0:
        return matrix.copy()
    n, m = matrix.shape
    cy, cx = (n - 1) / 2.0, (m - 1) / 2.0
    theta = np.deg2rad(degrees)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    rows, cols = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
    # inverse rotation: source coordinates for each destination cell
    dy, dx = rows - cy, cols - cx
    src_r = np.rint(cos_t * dy + sin_t * dx + cy).astype(np.int64)
    src_c = np.rint(-sin_t * dy + cos_t * dx + cx).astype(np.int64)
    inside = (src_r >= 0) & (src_r < n) & (src_c >= 0) & (src_c < m)
    out = np.zeros_like(matrix)
    out[inside] = matrix[src_r[inside], src_c[inside]]
    return out


def apply_chain(series: PacketSeries, specs, resolution: int, window: float,
                rng: np.random.Generator, normalization: str = "raw") -> np.ndarray:
    """Apply specs in the given order (time-series ones before flowpic
    construction, image ones after) and return the resulting matrix."""
    for spec in specs:
        if spec.is_timeseries:
            series = apply_timeseries(series, spec, rng)
    fp = build_flowpic(series, resolution, window)
    matrix = to_model_input(fp, normalization)
    for spec in specs:
        if spec.is_image:
            matrix = apply_image(matrix, spec, rng)
    return matrix


def make_views(sample: PacketSeries, pair, resolution: int, window: float,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Produce two independently augmented views of one sample.

    Each view applies both specs of the pair, chained in a freshly drawn
    random order.
    """
    spec_a, spec_b = pair
    views = []
    for _ in range(2):
        order = [spec_a, spec_b] if rng.random() < 0.5 else [spec_b, spec_a]
        views.append(apply_chain(sample, order, resolution, window, rng))
    return views[0], views[1]


def expand_training_set(samples, spec: AugmentationSpec, times: int,
                        resolution: int, window: float,
                        rng: np.random.Generator) -> list[np.ndarray]:
    """Augment every sample `times` times, returning |samples| * times matrices."""
    if times < 1:
        raise ValueError("times must be >= 1")
    out = []
    for series in samples:
        for _ in range(times):
            out.append(apply_chain(series, [spec], resolution, window, rng))
    return out
