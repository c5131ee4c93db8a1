"""Synthetic feature/mask/guide generation.

A case is a random smooth elliptical foreground region. Patch features
are class prototypes (one foreground, one background vector, fixed per
prototype seed) plus per-view independent Gaussian noise; flipped views
are exact spatial flips of the clean identity-view features with fresh
noise. The guide image renders the mask with two intensities plus noise,
replicated to three channels. Everything is deterministic per seed.

Volumetric patients use a random ellipsoid whose z cross-sections give
per-slice masks; slices outside the ellipsoid are empty (inactive).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import TRANSFORM_CODES, FeatureStack
from .views import ViewSpec

_BLOB_STREAM = 0x1B0B
_GUIDE_STREAM = 0x6E1D

GUIDE_BG_LEVEL = 70.0
GUIDE_FG_LEVEL = 190.0
GUIDE_NOISE = 8.0


@dataclass(frozen=True)
class Ellipse:
    center_u: float
    center_v: float
    radius_u: float
    radius_v: float
    angle: float

    def scaled(self, factor: float) -> "Ellipse":
        return Ellipse(
            self.center_u, self.center_v,
            self.radius_u * factor, self.radius_v * factor, self.angle,
        )


def random_ellipse(rng: np.random.Generator) -> Ellipse:
    return Ellipse(
        center_u=float(rng.uniform(0.35, 0.65)),
        center_v=float(rng.uniform(0.35, 0.65)),
        radius_u=float(rng.uniform(0.16, 0.30)),
        radius_v=float(rng.uniform(0.16, 0.30)),
        angle=float(rng.uniform(0.0, np.pi)),
    )


def ellipse_labels(ellipse: Ellipse, h: int, w: int) -> np.ndarray:
    """Boolean grid: cell centers inside the ellipse (unit square coords)."""
    if ellipse.radius_u <= 0.0 or ellipse.radius_v <= 0.0:
        return np.zeros((h, w), dtype=bool)
    vs = (np.arange(h) + 0.5) / h
    us = (np.arange(w) + 0.5) / w
    uu, vv = np.meshgrid(us, vs)
    du = uu - ellipse.center_u
    dv = vv - ellipse.center_v
    cos_a, sin_a = np.cos(ellipse.angle), np.sin(ellipse.angle)
    ru = (du * cos_a + dv * sin_a) / ellipse.radius_u
    rv = (-du * sin_a + dv * cos_a) / ellipse.radius_v
    return ru**2 + rv**2 <= 1.0


def class_prototypes(
    channels: int, prototype_seed: int = 0, distance: float = 2.0
) -> tuple[np.ndarray, np.ndarray]:
    """(background, foreground) feature prototypes at the given separation."""
    rng = np.random.default_rng([prototype_seed, channels])
    mu_bg = rng.normal(size=channels)
    direction = rng.normal(size=channels)
    direction /= np.linalg.norm(direction)
    mu_fg = mu_bg + distance * direction
    return mu_bg, mu_fg


def _render_guide(mask: np.ndarray, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, _GUIDE_STREAM])
    gray = np.where(mask > 0, GUIDE_FG_LEVEL, GUIDE_BG_LEVEL)
    gray = gray + rng.normal(0.0, GUIDE_NOISE, size=mask.shape)
    gray = np.clip(np.round(gray), 0, 255).astype(np.uint8)
    return np.repeat(gray[:, :, None], 3, axis=2)


def _view_features(
    labels: np.ndarray,
    channels: int,
    noise_sigma: float,
    seed: int,
    resolution_tag: int,
    transform: str,
    prototypes: tuple[np.ndarray, np.ndarray],
) -> FeatureStack:
    mu_bg, mu_fg = prototypes
    if transform == "hflip":
        labels = labels[:, ::-1]
    elif transform == "vflip":
        labels = labels[::-1, :]
    clean = np.where(labels[:, :, None], mu_fg, mu_bg)
    if noise_sigma > 0.0:
        rng = np.random.default_rng([seed, resolution_tag, TRANSFORM_CODES[transform]])
        clean = clean + noise_sigma * rng.normal(size=clean.shape)
    return FeatureStack(
        data=clean.astype(np.float32),
        resolution_tag=resolution_tag,
        transform_tag=transform,
    )


def generate_synthetic_case(
    seed: int,
    grid_h: int,
    grid_w: int,
    channels: int,
    out_h: int = 64,
    out_w: int = 64,
    noise_sigma: float = 0.5,
    prototype_distance: float = 2.0,
    prototype_seed: int = 0,
    transforms: tuple[str, ...] = ("id", "hflip", "vflip"),
    ellipse: Ellipse | None = None,
) -> tuple[dict[str, FeatureStack], np.ndarray, np.ndarray]:
    """One single-resolution case: per-transform features, mask, guide.

    The foreground region depends only on the seed (not the grid size),
    so calls with different grids but the same seed describe the same
    underlying case.
    """
    if min(grid_h, grid_w, channels, out_h, out_w) < 1:
        raise ValueError("all dimensions must be >= 1")
    if ellipse is None:
        ellipse = random_ellipse(np.random.default_rng([seed, _BLOB_STREAM]))
    prototypes = class_prototypes(channels, prototype_seed, prototype_distance)
    labels = ellipse_labels(ellipse, grid_h, grid_w)
    resolution_tag = grid_h * 16
    views = {
        t: _view_features(labels, channels, noise_sigma, seed, resolution_tag, t, prototypes)
        for t in transforms
    }
    mask = ellipse_labels(ellipse, out_h, out_w).astype(np.uint8)
    guide = _render_guide(mask, seed)
    return views, mask, guide


def generate_case_multires(
    seed: int,
    grid_sizes: dict[int, tuple[int, int]],
    channels: int,
    out_h: int,
    out_w: int,
    noise_sigma: float = 0.5,
    prototype_distance: float = 2.0,
    prototype_seed: int = 0,
    transforms: tuple[str, ...] = ("id", "hflip", "vflip"),
    ellipse: Ellipse | None = None,
) -> tuple[dict[ViewSpec, FeatureStack], np.ndarray, np.ndarray]:
    """Multi-resolution case keyed by ViewSpec; one shared foreground blob."""
    if ellipse is None:
        ellipse = random_ellipse(np.random.default_rng([seed, _BLOB_STREAM]))
    prototypes = class_prototypes(channels, prototype_seed, prototype_distance)
    views: dict[ViewSpec, FeatureStack] = {}
    for resolution, (grid_h, grid_w) in sorted(grid_sizes.items()):
        labels = ellipse_labels(ellipse, grid_h, grid_w)
        for t in transforms:
            views[ViewSpec(resolution, t)] = _view_features(
                labels, channels, noise_sigma, seed, resolution, t, prototypes
            )
    mask = ellipse_labels(ellipse, out_h, out_w).astype(np.uint8)
    guide = _render_guide(mask, seed)
    return views, mask, guide


@dataclass
class SyntheticSlice:
    slice_index: int
    views: dict[ViewSpec, FeatureStack]
    mask: np.ndarray
    guide: np.ndarray


def generate_synthetic_patient(
    seed: int,
    depth: int,
    grid_sizes: dict[int, tuple[int, int]],
    channels: int,
    out_h: int,
    out_w: int,
    noise_sigma: float = 0.5,
    prototype_distance: float = 2.0,
    prototype_seed: int = 0,
    transforms: tuple[str, ...] = ("id", "hflip", "vflip"),
) -> list[SyntheticSlice]:
    """A stack of slices cutting through one random ellipsoid.

    Per-slice feature noise is independent, which is what the z-axis
    smoothing prior is meant to exploit.
    """
    rng = np.random.default_rng([seed, _BLOB_STREAM])
    base = random_ellipse(rng)
    # z extent is kept large relative to the depth so cross-sections vary
    # slowly from slice to slice; z smoothing assumes that regime
    center_z = float(rng.uniform(0.45, 0.55))
    radius_z = float(rng.uniform(0.42, 0.58))
    slices = []
    for z in range(depth):
        zc = (z + 0.5) / depth
        rel = (zc - center_z) / radius_z
        scale = float(np.sqrt(max(0.0, 1.0 - rel * rel)))
        slice_seed = int(np.random.SeedSequence([seed, z]).generate_state(1)[0])
        views, mask, guide = generate_case_multires(
            slice_seed,
            grid_sizes,
            channels,
            out_h,
            out_w,
            noise_sigma=noise_sigma,
            prototype_distance=prototype_distance,
            prototype_seed=prototype_seed,
            transforms=transforms,
            ellipse=base.scaled(scale),
        )
        slices.append(SyntheticSlice(slice_index=z, views=views, mask=mask, guide=guide))
    return slices
