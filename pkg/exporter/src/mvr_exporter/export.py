"""Export frozen patch features to MVRF files plus manifest lines.

Per (case, resolution, transform): flip the image in image space, resize
to r x r, replicate single-channel inputs to three channels, normalize,
run the frozen encoder, concatenate patch tokens of the last three
blocks along channels, and write one MVRF file (written atomically via a
temp file). Transforms happen before encoding because ViT features are
not exactly flip-equivariant; the downstream consumer inverse-transforms
predictions, not features.
"""

from __future__ import annotations

import json
import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .vit import PATCH_SIZE, PatchVit

logger = logging.getLogger(__name__)

# standard DINO-family preprocessing constants
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

TRANSFORM_CODES = {"id": 0, "hflip": 1, "vflip": 2}
LAST_BLOCKS = 3

_MVRF_HEADER = struct.Struct("<4sHIIIIBBH")


@dataclass
class ExportJob:
    out_dir: Path
    weights_path: Path
    resolutions: tuple[int, ...] = (512, 1024)
    transforms: tuple[str, ...] = ("id", "hflip", "vflip")
    mean: tuple[float, float, float] = IMAGENET_MEAN
    std: tuple[float, float, float] = IMAGENET_STD
    masks_dir: Path | None = None
    record_guide: bool = False
    provenance: str = ""

    def __post_init__(self):
        for r in self.resolutions:
            if r % PATCH_SIZE != 0:
                raise ValueError(f"resolution {r} is not divisible by the {PATCH_SIZE}-px patch")
        for t in self.transforms:
            if t not in TRANSFORM_CODES:
                raise ValueError(f"unknown transform {t!r}")


def write_mvrf(path: Path, features: np.ndarray, resolution: int, transform: str) -> None:
    """Atomic MVRF write (see the consumer's format spec; version 1, f32)."""
    h, w, c = features.shape
    header = _MVRF_HEADER.pack(
        b"MVRF", 1, resolution, h, w, c, TRANSFORM_CODES[transform], 0, 0
    )
    payload = np.ascontiguousarray(features, dtype="<f4").tobytes()
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(header + payload)
    os.replace(tmp, path)


def _apply_transform(image: Image.Image, transform: str) -> Image.Image:
    if transform == "id":
        return image
    if transform == "hflip":
        return image.transpose(Image.FLIP_LEFT_RIGHT)
    return image.transpose(Image.FLIP_TOP_BOTTOM)


def preprocess(image: Image.Image, resolution: int, transform: str, job: ExportJob) -> torch.Tensor:
    """Transform, resize, replicate channels, normalize -> (1, 3, r, r)."""
    img = _apply_transform(image, transform)
    img = img.resize((resolution, resolution), Image.BILINEAR)
    # single-channel modalities replicate across the three input channels
    img = img.convert("RGB")
    arr = np.asarray(img, dtype=np.float32) / 255.0
    arr = (arr - np.asarray(job.mean, dtype=np.float32)) / np.asarray(job.std, dtype=np.float32)
    return torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)


@torch.no_grad()
def extract_features(
    model: PatchVit, image: Image.Image, resolution: int, transform: str, job: ExportJob
) -> np.ndarray:
    """(r/16, r/16, 3*dim) stack: last three block outputs, channel-concatenated."""
    if model.depth < LAST_BLOCKS:
        raise ValueError(
            f"backbone has {model.depth} blocks; the feature stack taps the last {LAST_BLOCKS}"
        )
    pixels = preprocess(image, resolution, transform, job)
    block_indices = list(range(model.depth - LAST_BLOCKS, model.depth))
    outputs = model.forward_blocks(pixels, block_indices)
    return torch.cat(outputs, dim=2).numpy().astype(np.float32)


def export_case(image_path: Path, job: ExportJob, model: PatchVit) -> dict:
    """Write every configured view of one image; return its manifest record."""
    case_id = image_path.stem
    features_dir = job.out_dir / "features"
    features_dir.mkdir(parents=True, exist_ok=True)
    with Image.open(image_path) as img:
        width, height = img.size
        views: dict[str, dict[str, str]] = {}
        for resolution in job.resolutions:
            for transform in job.transforms:
                features = extract_features(model, img, resolution, transform, job)
                expected = resolution // PATCH_SIZE
                assert features.shape[:2] == (expected, expected)
                name = f"{case_id}_r{resolution}_{transform}.mvrf"
                write_mvrf(features_dir / name, features, resolution, transform)
                views.setdefault(str(resolution), {})[transform] = f"features/{name}"
        record: dict = {
            "case_id": case_id,
            "height": height,
            "width": width,
            "views": views,
        }
        if job.masks_dir is not None:
            mask_path = job.masks_dir / f"{case_id}.png"
            if mask_path.exists():
                record["mask"] = os.path.relpath(mask_path, job.out_dir)
        if job.record_guide:
            guides_dir = job.out_dir / "guides"
            guides_dir.mkdir(exist_ok=True)
            img.convert("RGB").save(guides_dir / f"{case_id}.png")
            record["guide"] = f"guides/{case_id}.png"
        if job.provenance:
            record["provenance"] = job.provenance
    return record


def export_batch(image_paths: list[Path], job: ExportJob, model: PatchVit,
                 manifest_path: Path) -> list[dict]:
    records = []
    for path in sorted(image_paths):
        records.append(export_case(path, job, model))
        logger.info("exported %s (%d views)", path.name,
                    len(job.resolutions) * len(job.transforms))
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(r, sort_keys=True) for r in records]
    manifest_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return records
