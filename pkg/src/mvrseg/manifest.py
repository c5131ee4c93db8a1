"""Dataset manifests: line-delimited JSON case records plus image IO.

One case per line. Paths are stored relative to the manifest file.
Example record:

    {"case_id": "c000", "patient_id": "p0", "slice_index": 3,
     "mask": "masks/c000.png", "guide": "guides/c000.png",
     "height": 64, "width": 64,
     "views": {"256": {"id": "feats/c000_r256_id.mvrf", ...}, ...}}

Masks are 8-bit single-channel PNGs (nonzero = foreground); guides are
8-bit RGB PNGs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from .grid import TRANSFORM_IDS


class ManifestError(ValueError):
    """Manifest is structurally invalid or references missing files."""


@dataclass
class CaseRecord:
    case_id: str
    height: int
    width: int
    view_paths: dict[tuple[int, str], Path]
    mask_path: Path | None = None
    guide_path: Path | None = None
    patient_id: str | None = None
    slice_index: int | None = None
    provenance: str | None = None

    @property
    def is_volumetric(self) -> bool:
        return self.patient_id is not None and self.slice_index is not None


def _relative(path: Path, base: Path) -> str:
    # os.path.relpath tolerates relative inputs and out-of-tree targets
    return os.path.relpath(Path(path).resolve(), base)


def _record_to_json(record: CaseRecord, base: Path) -> dict:
    views: dict[str, dict[str, str]] = {}
    for (res, transform), path in sorted(record.view_paths.items()):
        views.setdefault(str(res), {})[transform] = _relative(path, base)
    obj = {
        "case_id": record.case_id,
        "height": record.height,
        "width": record.width,
        "views": views,
    }
    if record.mask_path is not None:
        obj["mask"] = _relative(record.mask_path, base)
    if record.guide_path is not None:
        obj["guide"] = _relative(record.guide_path, base)
    if record.patient_id is not None:
        obj["patient_id"] = record.patient_id
    if record.slice_index is not None:
        obj["slice_index"] = record.slice_index
    if record.provenance:
        obj["provenance"] = record.provenance
    return obj


def save_manifest(path: str | Path, records: Sequence[CaseRecord]) -> None:
    path = Path(path)
    base = path.parent.resolve()
    lines = [json.dumps(_record_to_json(r, base), sort_keys=True) for r in records]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path: str | Path, check_files: bool = True) -> list[CaseRecord]:
    """Parse and validate a manifest.

    Validation: unique case ids, every declared view file exists, and
    volumetric cases of one patient share in-plane dimensions.
    """
    path = Path(path)
    base = path.parent.resolve()
    records: list[CaseRecord] = []
    seen: set[str] = set()
    patient_dims: dict[str, tuple[int, int]] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
        try:
            case_id = obj["case_id"]
            height = int(obj["height"])
            width = int(obj["width"])
            views_obj = obj["views"]
        except KeyError as exc:
            raise ManifestError(f"{path}:{lineno}: missing required field {exc}") from exc
        if case_id in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate case_id {case_id!r}")
        seen.add(case_id)
        view_paths: dict[tuple[int, str], Path] = {}
        for res_key, transforms in views_obj.items():
            for transform, rel in transforms.items():
                if transform not in TRANSFORM_IDS:
                    raise ManifestError(
                        f"{path}:{lineno}: unknown transform {transform!r} for case {case_id}"
                    )
                view_paths[(int(res_key), transform)] = base / rel
        record = CaseRecord(
            case_id=case_id,
            height=height,
            width=width,
            view_paths=view_paths,
            mask_path=(base / obj["mask"]) if obj.get("mask") else None,
            guide_path=(base / obj["guide"]) if obj.get("guide") else None,
            patient_id=obj.get("patient_id"),
            slice_index=obj.get("slice_index"),
            provenance=obj.get("provenance"),
        )
        if record.patient_id is not None:
            dims = patient_dims.setdefault(record.patient_id, (height, width))
            if dims != (height, width):
                raise ManifestError(
                    f"{path}:{lineno}: patient {record.patient_id} mixes slice "
                    f"dimensions {dims} and {(height, width)}"
                )
        if check_files:
            for view, vpath in record.view_paths.items():
                if not vpath.exists():
                    raise ManifestError(
                        f"{path}:{lineno}: case {case_id} view {view} missing file {vpath}"
                    )
            for attr in ("mask_path", "guide_path"):
                fpath = getattr(record, attr)
                if fpath is not None and not fpath.exists():
                    raise ManifestError(f"{path}:{lineno}: case {case_id} missing {fpath}")
        records.append(record)
    if not records:
        raise ManifestError(f"{path}: manifest contains no cases")
    return records


def require_views(
    records: Iterable[CaseRecord], resolutions: Sequence[int], transforms: Sequence[str]
) -> None:
    """Fail before any computation if a configured view is undeclared."""
    for record in records:
        for res in resolutions:
            for transform in transforms:
                if (res, transform) not in record.view_paths:
                    raise ManifestError(
                        f"case {record.case_id} does not declare view "
                        f"({res}, {transform}); re-export features or "
                        f"restrict the configuration"
                    )


def load_mask(path: str | Path) -> np.ndarray:
    """8-bit single-channel PNG -> uint8 {0,1} mask (nonzero = foreground)."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"))
    return (arr > 0).astype(np.uint8)


def save_mask(path: str | Path, mask: np.ndarray) -> None:
    Image.fromarray((np.asarray(mask) > 0).astype(np.uint8) * 255, mode="L").save(path)


def load_guide(path: str | Path) -> np.ndarray:
    """8-bit RGB PNG -> (h, w, 3) float64 in [0, 255]."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"))
    return arr.astype(np.float64)


def save_guide(path: str | Path, guide: np.ndarray) -> None:
    arr = np.clip(np.asarray(guide), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)
