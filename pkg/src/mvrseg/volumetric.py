"""Non-parametric z-axis smoothing of slice-wise probability volumes.

Each in-plane pixel is convolved independently along the slice axis with
a normalised Gaussian kernel. Kernel taps falling outside the volume are
dropped and the surviving taps rescaled to sum to one, so constant
volumes pass through unchanged and end slices are not biased toward
background.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

from .fusion import threshold
from .grid import validate_probability_volume


@dataclass
class ZSmoothConfig:
    """sigma_z in slice units; sigma_z = 0 disables smoothing.

    When ``radius`` is None it defaults to ceil(3 * sigma_z), which keeps
    more than 99.7% of the Gaussian mass.
    """

    sigma_z: float = 4.0
    radius: int | None = None

    def __post_init__(self):
        if self.sigma_z < 0:
            raise ValueError("sigma_z must be >= 0")
        if self.radius is not None and self.radius < 0:
            raise ValueError("radius must be >= 0")

    @property
    def effective_radius(self) -> int:
        if self.radius is not None:
            return self.radius
        return int(np.ceil(3.0 * self.sigma_z))


def gaussian_kernel_1d(sigma_z: float, radius: int) -> np.ndarray:
    """Symmetric normalised Gaussian taps for offsets -radius..radius.

    sigma_z = 0 degenerates to the delta kernel.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if sigma_z < 0:
        raise ValueError("sigma_z must be >= 0")
    if sigma_z == 0.0:
        kernel = np.zeros(2 * radius + 1)
        kernel[radius] = 1.0
        return kernel
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(offsets**2) / (2.0 * sigma_z**2))
    return kernel / kernel.sum()


def smooth_z(volume: np.ndarray, config: ZSmoothConfig) -> np.ndarray:
    """Convolve a (depth, h, w) volume along z with border renormalisation."""
    volume = validate_probability_volume(volume)
    if config.sigma_z == 0.0 or config.effective_radius == 0 or volume.shape[0] == 1:
        return volume.copy()
    kernel = gaussian_kernel_1d(config.sigma_z, config.effective_radius)
    vol64 = volume.astype(np.float64)
    num = convolve1d(vol64, kernel, axis=0, mode="constant", cval=0.0)
    # Weight actually applied at each depth; dividing by it renormalises
    # the truncated border kernels to unit sum.
    coverage = convolve1d(np.ones(volume.shape[0]), kernel, mode="constant", cval=0.0)
    out = num / coverage[:, None, None]
    return np.clip(out, 0.0, 1.0).astype(volume.dtype)


def volume_threshold(volume: np.ndarray, level: float = 0.5) -> list[np.ndarray]:
    """Per-slice strict-``>`` thresholding of a probability volume."""
    volume = validate_probability_volume(volume)
    return [threshold(volume[z], level) for z in range(volume.shape[0])]
