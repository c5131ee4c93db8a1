"""Dense-grid value types and resampling primitives.

Grids are row-major numpy arrays: float32 at rest, float64 inside
reductions. Resampling uses half-pixel-center coordinates
(``src = (dst + 0.5) * scale - 0.5``, clamped to the valid range), so
constant grids are preserved exactly and outputs never leave the input
value range.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

TRANSFORM_IDS = ("id", "hflip", "vflip")

TRANSFORM_CODES = {"id": 0, "hflip": 1, "vflip": 2}
TRANSFORM_NAMES = {code: name for name, code in TRANSFORM_CODES.items()}


@dataclass(frozen=True)
class FeatureStack:
    """A patch-grid of concatenated backbone features for one view.

    Args:
        data: (height, width, channels) float array, all values finite.
        resolution_tag: input resolution (pixels) the grid was extracted at.
        transform_tag: image-space transform applied before extraction,
            one of ``TRANSFORM_IDS``.
    """

    data: np.ndarray
    resolution_tag: int
    transform_tag: str

    def __post_init__(self):
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise ValueError(f"feature grid must be (h, w, c), got shape {self.data.shape}")
        if self.transform_tag not in TRANSFORM_IDS:
            raise ValueError(f"unknown transform tag {self.transform_tag!r}")
        if not np.isfinite(self.data).all():
            raise ValueError("feature grid contains non-finite values")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def validate_probability_map(pmap: np.ndarray) -> np.ndarray:
    """Check a 2-d probability grid: finite, values in [0, 1]."""
    pmap = np.asarray(pmap)
    if pmap.ndim != 2 or min(pmap.shape) < 1:
        raise ValueError(f"probability map must be 2-d and non-empty, got shape {pmap.shape}")
    if not np.isfinite(pmap).all():
        raise ValueError("probability map contains non-finite values")
    if pmap.min() < 0.0 or pmap.max() > 1.0:
        raise ValueError("probability map has values outside [0, 1]")
    return pmap


def validate_binary_mask(mask: np.ndarray) -> np.ndarray:
    """Check a 2-d mask holds only {0, 1}."""
    mask = np.asarray(mask)
    if mask.ndim != 2 or min(mask.shape) < 1:
        raise ValueError(f"mask must be 2-d and non-empty, got shape {mask.shape}")
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("mask values must be exactly 0 or 1")
    return mask


def validate_probability_volume(volume: np.ndarray) -> np.ndarray:
    """Check a (depth, h, w) stack of probability maps with uniform shape."""
    volume = np.asarray(volume)
    if volume.ndim != 3 or min(volume.shape) < 1:
        raise ValueError(f"volume must be (depth, h, w) and non-empty, got shape {volume.shape}")
    if not np.isfinite(volume).all():
        raise ValueError("volume contains non-finite values")
    if volume.min() < 0.0 or volume.max() > 1.0:
        raise ValueError("volume has values outside [0, 1]")
    return volume


@lru_cache(maxsize=256)
def bilinear_weights(n_in: int, n_out: int) -> np.ndarray:
    """Dense (n_out, n_in) interpolation matrix for one axis.

    Each output sample is a convex combination of at most two input
    samples, so `W @ x` is the 1-d bilinear resize of `x` and `W.T @ g`
    is its exact adjoint (used for gradient backpropagation).
    """
    if n_in < 1 or n_out < 1:
        raise ValueError("bilinear weights need n_in >= 1 and n_out >= 1")
    scale = n_in / n_out
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    weights = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.arange(n_out)
    weights[rows, i0] += 1.0 - frac
    weights[rows, i1] += frac
    weights.setflags(write=False)
    return weights


def resize_bilinear(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize a 2-d grid with separable bilinear interpolation.

    Constant inputs map to the same constant and outputs stay within
    [min(input), max(input)].

    Raises:
        ValueError: on empty input or non-positive output dimensions.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2 or min(grid.shape) < 1:
        raise ValueError(f"expected non-empty 2-d grid, got shape {grid.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"invalid output size ({out_h}, {out_w})")
    w_rows = bilinear_weights(grid.shape[0], out_h)
    w_cols = bilinear_weights(grid.shape[1], out_w)
    return w_rows @ grid @ w_cols.T


def resize_bilinear_adjoint(grad: np.ndarray, in_h: int, in_w: int) -> np.ndarray:
    """Adjoint of :func:`resize_bilinear`: distribute output-pixel gradients
    back onto the (in_h, in_w) source grid."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.ndim != 2 or min(grad.shape) < 1:
        raise ValueError(f"expected non-empty 2-d gradient, got shape {grad.shape}")
    if in_h < 1 or in_w < 1:
        raise ValueError(f"invalid input size ({in_h}, {in_w})")
    w_rows = bilinear_weights(in_h, grad.shape[0])
    w_cols = bilinear_weights(in_w, grad.shape[1])
    return w_rows.T @ grad @ w_cols


def resize_nearest(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbour resize (``src = floor((dst + 0.5) * scale)``).

    Output values are drawn only from input values, so binary masks stay
    binary.
    """
    mask = np.asarray(mask)
    if mask.ndim != 2 or min(mask.shape) < 1:
        raise ValueError(f"expected non-empty 2-d grid, got shape {mask.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"invalid output size ({out_h}, {out_w})")
    src_r = np.floor((np.arange(out_h) + 0.5) * (mask.shape[0] / out_h)).astype(np.int64)
    src_c = np.floor((np.arange(out_w) + 0.5) * (mask.shape[1] / out_w)).astype(np.int64)
    src_r = np.clip(src_r, 0, mask.shape[0] - 1)
    src_c = np.clip(src_c, 0, mask.shape[1] - 1)
    return mask[np.ix_(src_r, src_c)]


def apply_sigmoid(logits: np.ndarray) -> np.ndarray:
    """Element-wise logistic function, numerically stable for large |x|."""
    logits = np.asarray(logits, dtype=np.float64)
    out = np.empty_like(logits)
    pos = logits >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-logits[pos]))
    expx = np.exp(logits[~pos])
    out[~pos] = expx / (1.0 + expx)
    return out
