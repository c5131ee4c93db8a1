"""Multi-view inference: per-view prediction, inverse-transform alignment,
and test-time-augmentation averaging.

A view is (resolution, transform). The transform set is flips only, and
every flip is its own inverse, so inverse-transforming a prediction is
just re-applying the flip.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .grid import TRANSFORM_IDS, FeatureStack
from .probe import ProbeParams, predict_probability


class MissingViewError(LookupError):
    """A configured view has no feature stack (incomplete feature export)."""


class MissingProbeError(LookupError):
    """No trained probe is available for a requested resolution."""


@dataclass(frozen=True)
class ViewSpec:
    resolution: int
    transform: str

    def __post_init__(self):
        if self.transform not in TRANSFORM_IDS:
            raise ValueError(f"unknown transform {self.transform!r}")


def apply_inverse_transform(pmap: np.ndarray, transform: str) -> np.ndarray:
    """Map a prediction back to original image coordinates."""
    if transform == "id":
        return pmap
    if transform == "hflip":
        return pmap[:, ::-1]
    if transform == "vflip":
        return pmap[::-1, :]
    raise ValueError(f"unknown transform {transform!r}")


def predict_view(
    case_features: Mapping[ViewSpec, FeatureStack],
    view: ViewSpec,
    params: Mapping[int, ProbeParams],
    out_h: int,
    out_w: int,
) -> np.ndarray:
    """Probability map for one view, aligned to original coordinates."""
    if view not in case_features:
        raise MissingViewError(f"no feature stack for view {view}")
    if view.resolution not in params:
        raise MissingProbeError(f"no probe for resolution {view.resolution}")
    pmap = predict_probability(case_features[view], params[view.resolution], out_h, out_w)
    return apply_inverse_transform(pmap, view.transform)


def tta_average(maps: Sequence[np.ndarray]) -> np.ndarray:
    """Element-wise mean of same-shape maps, reduced in index order.

    Accumulates in double precision, stores back as single.
    """
    if len(maps) == 0:
        raise ValueError("cannot average an empty sequence of maps")
    shape = maps[0].shape
    acc = np.zeros(shape, dtype=np.float64)
    for m in maps:
        if m.shape != shape:
            raise ValueError(f"shape mismatch: {m.shape} vs {shape}")
        acc += m
    return (acc / len(maps)).astype(np.float32)
