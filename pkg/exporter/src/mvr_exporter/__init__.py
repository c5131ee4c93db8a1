"""Frozen ViT-B/16 patch-feature exporter (MVRF + manifest emission)."""

from .export import ExportJob, export_batch, export_case, extract_features, write_mvrf
from .vit import PatchVit, infer_geometry, load_backbone, make_random_checkpoint

__version__ = "0.1.0"
