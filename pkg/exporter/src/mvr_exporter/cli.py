"""Command-line entry points for the feature exporter."""

from __future__ import annotations

import argparse
import glob
import logging
from pathlib import Path

import torch

from .export import ExportJob, export_batch
from .vit import load_backbone, make_random_checkpoint


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
    parser = argparse.ArgumentParser(
        prog="mvr-export",
        description="Export frozen ViT-B/16 patch features as MVRF files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="extract features for images")
    p.add_argument("--images", nargs="+", required=True,
                   help="image files or globs (PNG/JPEG)")
    p.add_argument("--weights", type=Path, required=True,
                   help="local backbone state-dict checkpoint (.pt)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--manifest", type=Path,
                   help="manifest path (default <out>/manifest.jsonl)")
    p.add_argument("--resolutions", default="512,1024")
    p.add_argument("--transforms", default="id,hflip,vflip")
    p.add_argument("--masks", type=Path, help="directory of <case_id>.png masks")
    p.add_argument("--record-guide", action="store_true",
                   help="store each input as an RGB guide PNG")
    p.add_argument("--threads", type=int, help="torch CPU threads")

    p = sub.add_parser("make-test-weights",
                       help="write a seeded random checkpoint with ViT-B/16 geometry")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--depth", type=int, default=12)
    p.add_argument("--dim", type=int, default=768)
    p.add_argument("--registers", type=int, default=4)
    p.add_argument("--base-grid", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)

    if args.command == "make-test-weights":
        make_random_checkpoint(args.out, depth=args.depth, dim=args.dim,
                               num_registers=args.registers,
                               base_grid=args.base_grid, seed=args.seed)
        print(f"wrote {args.out}")
        return 0

    if args.threads:
        torch.set_num_threads(args.threads)
    paths: list[Path] = []
    for pattern in args.images:
        matched = [Path(p) for p in glob.glob(pattern)]
        paths.extend(matched if matched else [Path(pattern)])
    missing = [p for p in paths if not p.exists()]
    if missing:
        parser.error(f"missing image files: {missing}")
    model = load_backbone(args.weights)
    job = ExportJob(
        out_dir=args.out,
        weights_path=args.weights,
        resolutions=tuple(int(r) for r in args.resolutions.split(",")),
        transforms=tuple(t.strip() for t in args.transforms.split(",")),
        masks_dir=args.masks,
        record_guide=args.record_guide,
        provenance=f"mvr-export checkpoint={args.weights.name} depth={model.depth}",
    )
    manifest = args.manifest or (args.out / "manifest.jsonl")
    records = export_batch(paths, job, model, manifest)
    print(f"exported {len(records)} cases -> {manifest}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
