"""Overlap and boundary-distance metrics with fixed evaluation conventions.

Conventions (pinned so that results are bit-reproducible):
  * Dice = IoU = 1 and HD95 = 0 when both masks are empty; HD95 is
    infinite when exactly one mask is empty, and such cases are tallied
    separately instead of entering the finite mean.
  * Boundary pixels are foreground pixels with a background or
    out-of-bounds neighbour under 4-connectivity (6-connectivity in 3D).
  * HD95 is the linear-interpolation 95th percentile of the pooled
    directed nearest-boundary distances (both directions), in pixel or
    voxel units with unit spacing.
  * 2D metrics are computed on a fixed 256x256 grid: probability maps
    are resized bilinearly then thresholded, masks use nearest-neighbour.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.ndimage import distance_transform_edt

from .fusion import threshold
from .grid import resize_bilinear, resize_nearest, validate_binary_mask

METRIC_GRID_SIZE = 256


@dataclass
class CaseMetrics:
    case_id: str
    dice: float
    iou: float
    hd95: float  # math.inf when exactly one mask is empty


@dataclass
class AggregateReport:
    mean_dice: float
    mean_iou: float
    mean_hd95_finite: float | None  # None when no case has a finite HD95
    infinite_hd95_count: int
    total_cases: int


def dice(pred: np.ndarray, gt: np.ndarray) -> float:
    """2|A n B| / (|A| + |B|); 1.0 when both masks are empty."""
    pred = validate_binary_mask(pred)
    gt = validate_binary_mask(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    a = int(pred.sum())
    b = int(gt.sum())
    if a + b == 0:
        return 1.0
    inter = int(np.logical_and(pred, gt).sum())
    return 2.0 * inter / (a + b)


def iou(pred: np.ndarray, gt: np.ndarray) -> float:
    """|A n B| / |A u B|; 1.0 when both masks are empty."""
    pred = validate_binary_mask(pred)
    gt = validate_binary_mask(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    inter = int(np.logical_and(pred, gt).sum())
    union = int(np.logical_or(pred, gt).sum())
    if union == 0:
        return 1.0
    return inter / union


def boundary_mask(mask: np.ndarray) -> np.ndarray:
    """Foreground pixels/voxels with a face-adjacent background or
    out-of-bounds neighbour (4-connectivity in 2D, 6 in 3D)."""
    mask = np.asarray(mask).astype(bool)
    if mask.ndim not in (2, 3):
        raise ValueError("boundary extraction expects a 2-d or 3-d mask")
    interior = mask.copy()
    for axis in range(mask.ndim):
        # out-of-bounds counts as background, so edge planes are boundary
        prev_fg = np.zeros_like(mask)
        next_fg = np.zeros_like(mask)
        src = [slice(None)] * mask.ndim
        dst = [slice(None)] * mask.ndim
        src[axis] = slice(None, -1)
        dst[axis] = slice(1, None)
        prev_fg[tuple(dst)] = mask[tuple(src)]
        src[axis] = slice(1, None)
        dst[axis] = slice(None, -1)
        next_fg[tuple(dst)] = mask[tuple(src)]
        interior &= prev_fg & next_fg
    return mask & ~interior


def _percentile_linear(values: np.ndarray, q: float) -> float:
    """Linear-interpolation percentile between order statistics."""
    return float(np.percentile(values, q, method="linear"))


def hd95(pred: np.ndarray, gt: np.ndarray) -> float:
    """95th-percentile symmetric boundary distance.

    Pools directed nearest-boundary distances pred->gt and gt->pred and
    takes the 95th percentile of the pooled sequence. Returns 0 when both
    masks are empty and inf when exactly one is.
    """
    pred = validate_binary_mask(pred)
    gt = validate_binary_mask(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    pred_empty = pred.sum() == 0
    gt_empty = gt.sum() == 0
    if pred_empty and gt_empty:
        return 0.0
    if pred_empty != gt_empty:
        return math.inf
    bp = boundary_mask(pred)
    bg = boundary_mask(gt)
    # Exact Euclidean distance of every pixel to the nearest boundary pixel
    # of the other mask; sampled at this mask's boundary pixels.
    dist_to_gt = distance_transform_edt(~bg)
    dist_to_pred = distance_transform_edt(~bp)
    pooled = np.concatenate([dist_to_gt[bp], dist_to_pred[bg]])
    return _percentile_linear(pooled, 95.0)


def to_metric_grid(
    pred: np.ndarray, gt: np.ndarray, level: float = 0.5
) -> tuple[np.ndarray, np.ndarray]:
    """Place a prediction/ground-truth pair on the fixed 256x256 grid.

    Float predictions are resized bilinearly and then thresholded; integer
    predictions and the ground-truth mask use nearest-neighbour resizing.
    """
    gt = validate_binary_mask(gt)
    gt_out = resize_nearest(gt, METRIC_GRID_SIZE, METRIC_GRID_SIZE).astype(np.uint8)
    pred = np.asarray(pred)
    if np.issubdtype(pred.dtype, np.floating):
        resized = resize_bilinear(pred, METRIC_GRID_SIZE, METRIC_GRID_SIZE)
        pred_out = threshold(resized, level)
    else:
        pred_out = resize_nearest(validate_binary_mask(pred),
                                  METRIC_GRID_SIZE, METRIC_GRID_SIZE).astype(np.uint8)
    return pred_out, gt_out


def volumetric_metrics(
    pred_volume: Sequence[np.ndarray],
    gt_volume: Sequence[np.ndarray],
    case_id: str = "",
) -> CaseMetrics:
    """Dice/IoU over all voxels jointly plus 3D boundary HD95."""
    if len(pred_volume) != len(gt_volume) or len(pred_volume) == 0:
        raise ValueError("volumes must be non-empty and depth-matched")
    pred = np.stack([validate_binary_mask(s) for s in pred_volume]).astype(np.uint8)
    gt = np.stack([validate_binary_mask(s) for s in gt_volume]).astype(np.uint8)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    a = int(pred.sum())
    b = int(gt.sum())
    inter = int(np.logical_and(pred, gt).sum())
    union = int(np.logical_or(pred, gt).sum())
    dice_v = 1.0 if a + b == 0 else 2.0 * inter / (a + b)
    iou_v = 1.0 if union == 0 else inter / union

    if a == 0 and b == 0:
        hd = 0.0
    elif (a == 0) != (b == 0):
        hd = math.inf
    else:
        bp = boundary_mask(pred)
        bg = boundary_mask(gt)
        dist_to_gt = distance_transform_edt(~bg)
        dist_to_pred = distance_transform_edt(~bp)
        pooled = np.concatenate([dist_to_gt[bp], dist_to_pred[bg]])
        hd = _percentile_linear(pooled, 95.0)
    return CaseMetrics(case_id=case_id, dice=dice_v, iou=iou_v, hd95=hd)


def aggregate(cases: Sequence[CaseMetrics]) -> AggregateReport:
    """Means over cases; HD95 averaged over finite cases only."""
    if not cases:
        raise ValueError("cannot aggregate an empty metric sequence")
    finite = [c.hd95 for c in cases if math.isfinite(c.hd95)]
    return AggregateReport(
        mean_dice=float(np.mean([c.dice for c in cases])),
        mean_iou=float(np.mean([c.iou for c in cases])),
        mean_hd95_finite=float(np.mean(finite)) if finite else None,
        infinite_hd95_count=sum(1 for c in cases if math.isinf(c.hd95)),
        total_cases=len(cases),
    )
