"""Entropy-guided hard routing between two resolution branches, plus
probability thresholding.

Entropy is measured in nats. A pixel keeps the low-resolution value
where that branch is confident (entropy <= tau, ties included) and
falls back to the high-resolution value elsewhere; no new values are
invented.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class FusionConfig:
    tau: float = 0.3        # entropy threshold, nats
    epsilon: float = 1e-8   # log stabiliser

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")


def binary_entropy(p: np.ndarray, epsilon: float = 1e-8) -> np.ndarray:
    """-p*ln(p+eps) - (1-p)*ln(1-p+eps), element-wise, in nats."""
    p = np.asarray(p, dtype=np.float64)
    return -p * np.log(p + epsilon) - (1.0 - p) * np.log(1.0 - p + epsilon)


def fuse_entropy_guided(
    p_lo: np.ndarray, p_hi: np.ndarray, config: FusionConfig
) -> np.ndarray:
    """Per-pixel selection: low branch where its entropy <= tau, else high."""
    p_lo = np.asarray(p_lo)
    p_hi = np.asarray(p_hi)
    if p_lo.shape != p_hi.shape:
        raise ValueError(f"shape mismatch: {p_lo.shape} vs {p_hi.shape}")
    keep_lo = binary_entropy(p_lo, config.epsilon) <= config.tau
    return np.where(keep_lo, p_lo, p_hi)


def threshold(pmap: np.ndarray, level: float = 0.5) -> np.ndarray:
    """Binarise at a strict ``> level`` cut, so an exact tie is background."""
    if not 0.0 < level < 1.0:
        raise ValueError("threshold level must lie in (0, 1)")
    return (np.asarray(pmap) > level).astype(np.uint8)
