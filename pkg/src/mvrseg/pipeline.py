"""Pipeline configuration and per-case orchestration.

The full inference path per case: predict every configured
(resolution, transform) view, inverse-transform, average the test-time
views within each resolution, route between the two resolution branches
by entropy, optionally refine with the dense CRF, then threshold.
Single-resolution configurations skip fusion. Fusion and refinement run
at original image resolution; 2D metrics are taken once at the end on
the fixed metric grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .crf import CrfConfig, densecrf_refine
from .formats import read_feature_stack
from .fusion import FusionConfig, fuse_entropy_guided, threshold
from .grid import TRANSFORM_IDS, FeatureStack
from .manifest import CaseRecord, load_guide, load_mask
from .probe import ProbeParams, TrainConfig
from .views import ViewSpec, predict_view, tta_average


@dataclass
class PipelineConfig:
    """Inference/training configuration with the published defaults."""

    resolutions: tuple[int, ...] = (512, 1024)
    transforms: tuple[str, ...] = ("id", "hflip", "vflip")
    tau: float = 0.3
    entropy_epsilon: float = 1e-8
    threshold: float = 0.5
    sigma_z: float = 4.0
    use_crf: bool = True
    crf: CrfConfig = field(default_factory=CrfConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def __post_init__(self):
        if not self.resolutions:
            raise ValueError("at least one resolution is required")
        if "id" not in self.transforms:
            raise ValueError("the identity transform must be present")
        for t in self.transforms:
            if t not in TRANSFORM_IDS:
                raise ValueError(f"unknown transform {t!r}")
        if len(self.resolutions) > 2:
            raise ValueError("entropy-guided fusion routes between at most two resolutions")

    @property
    def fusion(self) -> FusionConfig:
        return FusionConfig(tau=self.tau, epsilon=self.entropy_epsilon)


_CONFIG_KEYS = {
    "resolutions": lambda cfg, v: replace(
        cfg, resolutions=tuple(int(x) for x in v.split(","))
    ),
    "transforms": lambda cfg, v: replace(
        cfg, transforms=tuple(x.strip() for x in v.split(","))
    ),
    "tau": lambda cfg, v: replace(cfg, tau=float(v)),
    "entropy_epsilon": lambda cfg, v: replace(cfg, entropy_epsilon=float(v)),
    "threshold": lambda cfg, v: replace(cfg, threshold=float(v)),
    "sigma_z": lambda cfg, v: replace(cfg, sigma_z=float(v)),
    "crf": lambda cfg, v: replace(cfg, use_crf=v.lower() in ("1", "true", "yes", "on")),
    "crf_mode": lambda cfg, v: replace(cfg, crf=replace(cfg.crf, mode=v.strip())),
    "crf_iterations": lambda cfg, v: replace(cfg, crf=replace(cfg.crf, iterations=int(v))),
    "crf_w_gaussian": lambda cfg, v: replace(cfg, crf=replace(cfg.crf, w_gaussian=float(v))),
    "crf_sigma_xy_gaussian": lambda cfg, v: replace(
        cfg, crf=replace(cfg.crf, sigma_xy_gaussian=float(v))
    ),
    "crf_w_bilateral": lambda cfg, v: replace(cfg, crf=replace(cfg.crf, w_bilateral=float(v))),
    "crf_sigma_xy_bilateral": lambda cfg, v: replace(
        cfg, crf=replace(cfg.crf, sigma_xy_bilateral=float(v))
    ),
    "crf_sigma_rgb": lambda cfg, v: replace(cfg, crf=replace(cfg.crf, sigma_rgb=float(v))),
    "lambda_dice": lambda cfg, v: replace(cfg, train=replace(cfg.train, lambda_dice=float(v))),
    "dice_epsilon": lambda cfg, v: replace(cfg, train=replace(cfg.train, epsilon=float(v))),
    "learning_rate": lambda cfg, v: replace(
        cfg, train=replace(cfg.train, learning_rate=float(v))
    ),
    "epochs": lambda cfg, v: replace(cfg, train=replace(cfg.train, epochs=int(v))),
    "batch_size": lambda cfg, v: replace(cfg, train=replace(cfg.train, batch_size=int(v))),
    "hidden": lambda cfg, v: replace(cfg, train=replace(cfg.train, hidden=int(v))),
    "adam_beta1": lambda cfg, v: replace(cfg, train=replace(cfg.train, beta1=float(v))),
    "adam_beta2": lambda cfg, v: replace(cfg, train=replace(cfg.train, beta2=float(v))),
    "adam_epsilon": lambda cfg, v: replace(
        cfg, train=replace(cfg.train, adam_epsilon=float(v))
    ),
    "train_seed": lambda cfg, v: replace(cfg, train=replace(cfg.train, seed=int(v))),
    "seed": lambda cfg, v: replace(cfg, seed=int(v)),
}


def load_config(path: str | Path) -> PipelineConfig:
    """Parse a ``key = value`` config file (# starts a comment)."""
    cfg = PipelineConfig()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        cfg = _CONFIG_KEYS[key](cfg, value)
    return cfg


def default_config_text() -> str:
    """The default configuration as a config file (every published constant)."""
    cfg = PipelineConfig()
    lines = [
        "# mvrseg pipeline configuration",
        f"resolutions = {','.join(str(r) for r in cfg.resolutions)}",
        f"transforms = {','.join(cfg.transforms)}",
        f"tau = {cfg.tau}",
        f"entropy_epsilon = {cfg.entropy_epsilon}",
        f"threshold = {cfg.threshold}",
        f"sigma_z = {cfg.sigma_z}",
        f"crf = {str(cfg.use_crf).lower()}",
        f"crf_mode = {cfg.crf.mode}",
        f"crf_iterations = {cfg.crf.iterations}",
        f"crf_w_gaussian = {cfg.crf.w_gaussian}",
        f"crf_sigma_xy_gaussian = {cfg.crf.sigma_xy_gaussian}",
        f"crf_w_bilateral = {cfg.crf.w_bilateral}",
        f"crf_sigma_xy_bilateral = {cfg.crf.sigma_xy_bilateral}",
        f"crf_sigma_rgb = {cfg.crf.sigma_rgb}",
        f"lambda_dice = {cfg.train.lambda_dice}",
        f"dice_epsilon = {cfg.train.epsilon}",
        f"learning_rate = {cfg.train.learning_rate}",
        f"epochs = {cfg.train.epochs}",
        f"batch_size = {cfg.train.batch_size}",
        f"hidden = {cfg.train.hidden}",
        f"adam_beta1 = {cfg.train.beta1}",
        f"adam_beta2 = {cfg.train.beta2}",
        f"adam_epsilon = {cfg.train.adam_epsilon}",
        f"train_seed = {cfg.train.seed}",
        f"seed = {cfg.seed}",
    ]
    return "\n".join(lines) + "\n"


def run_full_pipeline(
    case_views: Mapping[ViewSpec, FeatureStack],
    probes: Mapping[int, ProbeParams],
    config: PipelineConfig,
    out_h: int,
    out_w: int,
    guide: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Fused probability map (float32) and final binary mask for one case."""
    branches: dict[int, np.ndarray] = {}
    for resolution in sorted(config.resolutions):
        maps = [
            predict_view(case_views, ViewSpec(resolution, t), probes, out_h, out_w)
            for t in config.transforms
        ]
        branches[resolution] = tta_average(maps)
    if len(branches) == 1:
        fused = next(iter(branches.values()))
    else:
        lo, hi = sorted(branches)
        fused = fuse_entropy_guided(branches[lo], branches[hi], config.fusion)
    if config.use_crf:
        if guide is None:
            raise ValueError("CRF refinement is enabled but the case has no guide image")
        fused = densecrf_refine(fused, guide, config.crf).astype(np.float32)
    return fused, threshold(fused, config.threshold)


def load_case_views(
    record: CaseRecord, config: PipelineConfig
) -> dict[ViewSpec, FeatureStack]:
    """Load the MVRF stacks for every configured view of one case."""
    views: dict[ViewSpec, FeatureStack] = {}
    for resolution in config.resolutions:
        for transform in config.transforms:
            path = record.view_paths.get((resolution, transform))
            if path is None:
                raise KeyError(
                    f"case {record.case_id} has no declared view ({resolution}, {transform})"
                )
            views[ViewSpec(resolution, transform)] = read_feature_stack(path)
    return views


def _transform_mask(mask: np.ndarray, transform: str) -> np.ndarray:
    if transform == "id":
        return mask
    if transform == "hflip":
        return mask[:, ::-1]
    return mask[::-1, :]


def build_training_samples(
    records: Sequence[CaseRecord], config: PipelineConfig
) -> list[tuple[dict[int, FeatureStack], np.ndarray]]:
    """Flatten cases into per-transform training samples.

    Geometric augmentation happened at feature-extraction time, so every
    transform variant is an independent sample whose target is the mask
    transformed the same way (flips are exact on masks).
    """
    samples: list[tuple[dict[int, FeatureStack], np.ndarray]] = []
    for record in records:
        if record.mask_path is None:
            raise ValueError(f"case {record.case_id} has no mask and cannot be trained on")
        mask = load_mask(record.mask_path)
        for transform in config.transforms:
            stacks: dict[int, FeatureStack] = {}
            for resolution in config.resolutions:
                path = record.view_paths.get((resolution, transform))
                if path is None:
                    raise KeyError(
                        f"case {record.case_id} has no declared view "
                        f"({resolution}, {transform})"
                    )
                stacks[resolution] = read_feature_stack(path)
            samples.append((stacks, _transform_mask(mask, transform)))
    return samples


def infer_case(
    record: CaseRecord,
    probes: Mapping[int, ProbeParams],
    config: PipelineConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Load views (and guide if needed) and run the full pipeline."""
    views = load_case_views(record, config)
    guide = None
    if config.use_crf:
        if record.guide_path is None:
            raise ValueError(
                f"case {record.case_id} has no guide image but CRF refinement is enabled"
            )
        guide = load_guide(record.guide_path)
    return run_full_pipeline(views, probes, config, record.height, record.width, guide)


def group_by_patient(records: Sequence[CaseRecord]) -> dict[str, list[CaseRecord]]:
    """Volumetric grouping: patient id -> slices ordered by slice index."""
    groups: dict[str, list[CaseRecord]] = {}
    for record in records:
        if not record.is_volumetric:
            raise ValueError(
                f"case {record.case_id} lacks patient_id/slice_index; "
                "volumetric processing needs both"
            )
        groups.setdefault(record.patient_id, []).append(record)
    for patient, slices in groups.items():
        slices.sort(key=lambda r: r.slice_index)
        indices = [s.slice_index for s in slices]
        if len(set(indices)) != len(indices):
            raise ValueError(f"patient {patient} has duplicate slice indices")
    return groups


def is_volumetric_manifest(records: Sequence[CaseRecord]) -> bool:
    return all(r.is_volumetric for r in records)
