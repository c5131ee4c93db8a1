"""Command-line interface.

Subcommands: train, infer, eval, ablate, kpatient, zsweep, synth, config.
Every command is deterministic given (manifest, config, seed); report
files are byte-identical across repeated runs. Report commands write a
tab-delimited table plus a rendered figure next to it.
"""

from __future__ import annotations

import argparse
import json
import logging
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .formats import read_probe_params, write_feature_stack, write_probe_params
from .manifest import (
    CaseRecord,
    ManifestError,
    load_manifest,
    load_mask,
    require_views,
    save_guide,
    save_manifest,
    save_mask,
)
from .metrics import (
    AggregateReport,
    CaseMetrics,
    aggregate,
    dice,
    hd95,
    iou,
    to_metric_grid,
    volumetric_metrics,
)
from .pipeline import (
    PipelineConfig,
    build_training_samples,
    default_config_text,
    group_by_patient,
    infer_case,
    is_volumetric_manifest,
    load_config,
)
from .probe import ProbeParams, train_probes
from .report import (
    parse_report_footer,
    plot_ablation,
    plot_dice_distribution,
    plot_learning_curve,
    plot_zsweep,
    write_case_report,
    write_rows_report,
)
from .sampling import sample_without_replacement
from .synthetic import generate_case_multires, generate_synthetic_patient
from .volumetric import ZSmoothConfig, smooth_z, volume_threshold

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# configuration plumbing


def _add_common_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="key = value configuration file")
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--tau", type=float, help="entropy routing threshold in nats")
    parser.add_argument("--sigma-z", type=float, dest="sigma_z",
                        help="z-axis smoothing bandwidth in slices (0 disables)")
    parser.add_argument("--threshold", type=float,
                        help="probability cut; values strictly above become foreground")
    parser.add_argument("--no-crf", action="store_true", help="skip DenseCRF refinement")
    parser.add_argument("--no-tta", action="store_true",
                        help="identity view only (no flip averaging)")
    parser.add_argument("--resolutions", type=str,
                        help="comma-separated readout resolutions, e.g. 512,1024")
    parser.add_argument("--crf-iters", type=int, dest="crf_iters",
                        help="mean-field iterations")
    parser.add_argument("--crf-weights", type=str, dest="crf_weights",
                        help="gaussian,bilateral pairwise weights, e.g. 3,5")
    parser.add_argument("--crf-bandwidths", type=str, dest="crf_bandwidths",
                        help="sigma_xy_gaussian,sigma_xy_bilateral,sigma_rgb, e.g. 3,50,13")


def build_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.resolutions:
        cfg = replace(cfg, resolutions=tuple(int(r) for r in args.resolutions.split(",")))
    if args.tau is not None:
        cfg = replace(cfg, tau=args.tau)
    if args.sigma_z is not None:
        cfg = replace(cfg, sigma_z=args.sigma_z)
    if args.threshold is not None:
        cfg = replace(cfg, threshold=args.threshold)
    if args.no_crf:
        cfg = replace(cfg, use_crf=False)
    if args.no_tta:
        cfg = replace(cfg, transforms=("id",))
    if args.crf_iters is not None:
        cfg = replace(cfg, crf=replace(cfg.crf, iterations=args.crf_iters))
    if args.crf_weights:
        w_g, w_b = (float(x) for x in args.crf_weights.split(","))
        cfg = replace(cfg, crf=replace(cfg.crf, w_gaussian=w_g, w_bilateral=w_b))
    if args.crf_bandwidths:
        s_g, s_b, s_r = (float(x) for x in args.crf_bandwidths.split(","))
        cfg = replace(cfg, crf=replace(
            cfg.crf, sigma_xy_gaussian=s_g, sigma_xy_bilateral=s_b, sigma_rgb=s_r))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed, train=replace(cfg.train, seed=args.seed))
    return cfg


def load_probes(probes_dir: Path, resolutions: Sequence[int]) -> dict[int, ProbeParams]:
    probes = {}
    for resolution in resolutions:
        path = probes_dir / f"probe_r{resolution}.mvrp"
        if not path.exists():
            raise FileNotFoundError(
                f"no trained probe for resolution {resolution}: expected {path}"
            )
        probes[resolution] = read_probe_params(path)
    return probes


# ---------------------------------------------------------------------------
# shared evaluation paths


def _eval_2d_case(
    case_id: str, prob_map: np.ndarray, gt: np.ndarray, level: float
) -> CaseMetrics:
    pred256, gt256 = to_metric_grid(prob_map, gt, level)
    return CaseMetrics(case_id=case_id, dice=dice(pred256, gt256),
                       iou=iou(pred256, gt256), hd95=hd95(pred256, gt256))


def _eval_volume(
    patient: str,
    slice_probs: Sequence[np.ndarray],
    gt_masks: Sequence[np.ndarray],
    config: PipelineConfig,
    sigma_z: float | None = None,
) -> CaseMetrics:
    volume = np.stack([np.asarray(p, dtype=np.float32) for p in slice_probs])
    sigma = config.sigma_z if sigma_z is None else sigma_z
    smoothed = smooth_z(volume, ZSmoothConfig(sigma_z=sigma))
    pred_masks = volume_threshold(smoothed, config.threshold)
    return volumetric_metrics(pred_masks, gt_masks, case_id=patient)


def evaluate_records(
    records: Sequence[CaseRecord],
    probes: dict[int, ProbeParams],
    config: PipelineConfig,
) -> tuple[list[CaseMetrics], AggregateReport]:
    """Run the full pipeline in memory and score every case/patient."""
    require_views(records, config.resolutions, config.transforms)
    cases: list[CaseMetrics] = []
    if is_volumetric_manifest(records):
        for patient, slices in sorted(group_by_patient(records).items()):
            probs = []
            gts = []
            for record in slices:
                fused, _ = infer_case(record, probes, config)
                probs.append(fused)
                gts.append(load_mask(record.mask_path))
            cases.append(_eval_volume(patient, probs, gts, config))
    else:
        for record in sorted(records, key=lambda r: r.case_id):
            fused, _ = infer_case(record, probes, config)
            gt = load_mask(record.mask_path)
            cases.append(_eval_2d_case(record.case_id, fused, gt, config.threshold))
    return cases, aggregate(cases)


# ---------------------------------------------------------------------------
# commands


def cmd_train(manifest_path: Path, out_dir: Path, config: PipelineConfig) -> dict[int, Path]:
    records = load_manifest(manifest_path)
    require_views(records, config.resolutions, config.transforms)
    samples = build_training_samples(records, config)
    logger.info("training on %d samples (%d cases x %d transforms)",
                len(samples), len(records), len(config.transforms))
    probes = train_probes(samples, config.train)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for resolution, params in sorted(probes.items()):
        path = out_dir / f"probe_r{resolution}.mvrp"
        write_probe_params(path, params)
        paths[resolution] = path
        logger.info("wrote %s (%d parameters)", path, params.param_count)
    return paths


def cmd_infer(
    manifest_path: Path, probes_dir: Path, out_dir: Path, config: PipelineConfig
) -> list[str]:
    records = load_manifest(manifest_path)
    require_views(records, config.resolutions, config.transforms)
    probes = load_probes(probes_dir, config.resolutions)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for record in sorted(records, key=lambda r: r.case_id):
        fused, mask = infer_case(record, probes, config)
        np.save(out_dir / f"{record.case_id}_prob.npy", fused.astype(np.float32))
        save_mask(out_dir / f"{record.case_id}_mask.png", mask)
        written.append(record.case_id)
    logger.info("wrote predictions for %d cases to %s", len(written), out_dir)
    return written


def cmd_eval(
    manifest_path: Path, pred_dir: Path, out_dir: Path, config: PipelineConfig
) -> AggregateReport:
    records = load_manifest(manifest_path)
    cases: list[CaseMetrics] = []
    if is_volumetric_manifest(records):
        for patient, slices in sorted(group_by_patient(records).items()):
            probs = [np.load(pred_dir / f"{r.case_id}_prob.npy") for r in slices]
            gts = [load_mask(r.mask_path) for r in slices]
            cases.append(_eval_volume(patient, probs, gts, config))
    else:
        for record in sorted(records, key=lambda r: r.case_id):
            prob = np.load(pred_dir / f"{record.case_id}_prob.npy")
            gt = load_mask(record.mask_path)
            cases.append(_eval_2d_case(record.case_id, prob, gt, config.threshold))
    agg = aggregate(cases)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_case_report(out_dir / "eval_report.tsv", cases, agg)
    plot_dice_distribution(out_dir / "eval_dice_hist.png", cases)
    logger.info("mean dice %.4f over %d cases (%d infinite HD95)",
                agg.mean_dice, agg.total_cases, agg.infinite_hd95_count)
    return agg


def ablation_variants(config: PipelineConfig) -> list[tuple[str, PipelineConfig]]:
    """The inference-time toggle grid run against fixed saved probes."""
    variants: list[tuple[str, PipelineConfig]] = [("full", config)]
    if config.use_crf:
        variants.append(("w/o densecrf", replace(config, use_crf=False)))
    if len(config.transforms) > 1:
        variants.append(("w/o flip tta", replace(config, transforms=("id",))))
    if len(config.resolutions) > 1:
        for resolution in sorted(config.resolutions):
            variants.append(
                (f"{resolution} only", replace(config, resolutions=(resolution,)))
            )
    if config.use_crf and len(config.transforms) > 1:
        variants.append(
            ("w/o tta and densecrf", replace(config, use_crf=False, transforms=("id",)))
        )
    for resolution in sorted(config.resolutions):
        variants.append(
            (f"raw {resolution} readout",
             replace(config, resolutions=(resolution,), use_crf=False, transforms=("id",)))
        )
    return variants


def cmd_ablate(
    manifest_path: Path, probes_dir: Path, out_dir: Path, config: PipelineConfig
) -> list[dict]:
    records = load_manifest(manifest_path)
    all_resolutions = sorted(config.resolutions)
    probes = load_probes(probes_dir, all_resolutions)
    rows = []
    full_dice = None
    for label, variant in ablation_variants(config):
        cases, agg = evaluate_records(records, probes, variant)
        if full_dice is None:
            full_dice = agg.mean_dice
        rows.append({
            "configuration": label,
            "dice": agg.mean_dice,
            "delta_dice": agg.mean_dice - full_dice,
            "iou": agg.mean_iou,
            "hd95_finite": agg.mean_hd95_finite,
            "inf_hd95": f"{agg.infinite_hd95_count}/{agg.total_cases}",
        })
        logger.info("%-24s dice %.4f (delta %+.4f)",
                    label, agg.mean_dice, agg.mean_dice - full_dice)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_rows_report(
        out_dir / "ablation_report.tsv",
        ["configuration", "dice", "delta_dice", "iou", "hd95_finite", "inf_hd95"],
        [[r["configuration"], r["dice"], r["delta_dice"], r["iou"],
          r["hd95_finite"], r["inf_hd95"]] for r in rows],
    )
    plot_ablation(out_dir / "ablation_delta.png",
                  [r["configuration"] for r in rows],
                  [r["delta_dice"] for r in rows])
    return rows


def cmd_zsweep(
    manifest_path: Path,
    probes_dir: Path,
    out_dir: Path,
    config: PipelineConfig,
    sigmas: Sequence[float] = (0.0, 2.0, 3.0, 4.0, 5.0),
) -> list[dict]:
    records = load_manifest(manifest_path)
    if not is_volumetric_manifest(records):
        raise ManifestError("zsweep needs a volumetric manifest (patient_id + slice_index)")
    require_views(records, config.resolutions, config.transforms)
    probes = load_probes(probes_dir, sorted(config.resolutions))
    # slice probabilities are sigma-independent; compute them once
    per_patient: dict[str, tuple[list[np.ndarray], list[np.ndarray]]] = {}
    for patient, slices in sorted(group_by_patient(records).items()):
        probs = []
        gts = []
        for record in slices:
            fused, _ = infer_case(record, probes, config)
            probs.append(fused)
            gts.append(load_mask(record.mask_path))
        per_patient[patient] = (probs, gts)
    rows = []
    baseline_dice = None
    for sigma in sigmas:
        cases = [
            _eval_volume(patient, probs, gts, config, sigma_z=sigma)
            for patient, (probs, gts) in sorted(per_patient.items())
        ]
        agg = aggregate(cases)
        if baseline_dice is None:
            baseline_dice = agg.mean_dice
            delta = "baseline"
        else:
            delta = f"{agg.mean_dice - baseline_dice:+.6f}"
        rows.append({
            "sigma_z": sigma,
            "dice": agg.mean_dice,
            "iou": agg.mean_iou,
            "hd95_finite": agg.mean_hd95_finite,
            "inf_hd95": f"{agg.infinite_hd95_count}/{agg.total_cases}",
            "delta_dice": delta,
        })
        logger.info("sigma_z %.1f: dice %.4f (%s)", sigma, agg.mean_dice, delta)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_rows_report(
        out_dir / "zsweep_report.tsv",
        ["sigma_z", "dice", "iou", "hd95_finite", "inf_hd95", "delta_dice"],
        [[r["sigma_z"], r["dice"], r["iou"], r["hd95_finite"],
          r["inf_hd95"], r["delta_dice"]] for r in rows],
    )
    plot_zsweep(out_dir / "zsweep.png", [r["sigma_z"] for r in rows],
                [r["dice"] for r in rows], [r["hd95_finite"] for r in rows])
    return rows


def _load_split(path: Path) -> tuple[list[str], list[str]]:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    train = list(obj["train"])
    test = list(obj["test"])
    overlap = set(train) & set(test)
    if overlap:
        raise ValueError(f"split train/test overlap: {sorted(overlap)}")
    return train, test


def cmd_kpatient(
    manifest_path: Path,
    split_path: Path,
    probes_out: Path,
    out_dir: Path,
    config: PipelineConfig,
    k_values: Sequence[int],
    seeds: Sequence[int],
    reference: float | None = None,
) -> list[dict]:
    """Annotation-efficiency protocol: train on K sampled patients' active
    slices, evaluate volumetrically on the held-out patients."""
    records = load_manifest(manifest_path)
    if not is_volumetric_manifest(records):
        raise ManifestError("kpatient needs a volumetric manifest")
    require_views(records, config.resolutions, config.transforms)
    train_ids, test_ids = _load_split(split_path)
    groups = group_by_patient(records)
    missing = [p for p in train_ids + test_ids if p not in groups]
    if missing:
        raise ManifestError(f"split references unknown patients: {missing}")
    test_records = [r for p in test_ids for r in groups[p]]
    rows = []
    for k in sorted(k_values):
        if k < 1 or k > len(train_ids):
            raise ValueError(f"K={k} outside 1..{len(train_ids)}")
        cell_dice, cell_iou, cell_hd95 = [], [], []
        inf_total = 0
        for seed in seeds:
            chosen = sample_without_replacement(train_ids, k, seed)
            active = [
                r for p in chosen for r in groups[p]
                if load_mask(r.mask_path).sum() > 0
            ]
            if not active:
                raise ValueError(f"K={k} seed {seed}: no active slices in {chosen}")
            samples = build_training_samples(active, config)
            cell_seed = int(np.random.SeedSequence(
                [config.train.seed, k, seed]).generate_state(1)[0])
            probes = train_probes(samples, replace(config.train, seed=cell_seed))
            for resolution, params in probes.items():
                probes_out.mkdir(parents=True, exist_ok=True)
                write_probe_params(
                    probes_out / f"probe_k{k}_seed{seed}_r{resolution}.mvrp", params
                )
            cases, agg = evaluate_records(test_records, probes, config)
            cell_dice.append(agg.mean_dice)
            cell_iou.append(agg.mean_iou)
            if agg.mean_hd95_finite is not None:
                cell_hd95.append(agg.mean_hd95_finite)
            inf_total += agg.infinite_hd95_count
            logger.info("K=%d seed=%d: %d active slices from %s, dice %.4f",
                        k, seed, len(active), ",".join(chosen), agg.mean_dice)
        row = {
            "k": k,
            "seeds": len(seeds),
            "mean_dice": float(np.mean(cell_dice)),
            "std_dice": float(np.std(cell_dice)),
            "mean_iou": float(np.mean(cell_iou)),
            "std_iou": float(np.std(cell_iou)),
            "mean_hd95_finite": float(np.mean(cell_hd95)) if cell_hd95 else None,
            "std_hd95_finite": float(np.std(cell_hd95)) if cell_hd95 else None,
            "inf_hd95": inf_total,
        }
        if reference is not None:
            row["pct_of_reference"] = 100.0 * row["mean_dice"] / reference
        rows.append(row)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = ["k", "seeds", "mean_dice", "std_dice", "mean_iou", "std_iou",
              "mean_hd95_finite", "std_hd95_finite", "inf_hd95"]
    if reference is not None:
        header.append("pct_of_reference")
    write_rows_report(out_dir / "kpatient_report.tsv", header,
                      [[row.get(col) for col in header] for row in rows])
    plot_learning_curve(out_dir / "kpatient_curve.png",
                        [r["k"] for r in rows],
                        [r["mean_dice"] for r in rows],
                        [r["std_dice"] for r in rows],
                        reference)
    return rows


# ---------------------------------------------------------------------------
# synthetic dataset emission


def _write_case(
    out_dir: Path,
    case_id: str,
    views,
    mask: np.ndarray,
    guide: np.ndarray,
    height: int,
    width: int,
    patient_id: str | None = None,
    slice_index: int | None = None,
) -> CaseRecord:
    (out_dir / "features").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(exist_ok=True)
    (out_dir / "guides").mkdir(exist_ok=True)
    view_paths = {}
    for spec, stack in views.items():
        path = out_dir / "features" / f"{case_id}_r{spec.resolution}_{spec.transform}.mvrf"
        write_feature_stack(path, stack)
        view_paths[(spec.resolution, spec.transform)] = path
    mask_path = out_dir / "masks" / f"{case_id}.png"
    save_mask(mask_path, mask)
    guide_path = out_dir / "guides" / f"{case_id}.png"
    save_guide(guide_path, guide)
    return CaseRecord(
        case_id=case_id, height=height, width=width, view_paths=view_paths,
        mask_path=mask_path, guide_path=guide_path,
        patient_id=patient_id, slice_index=slice_index,
        provenance="synthetic prototype-feature generator",
    )


def cmd_synth(
    out_dir: Path,
    config: PipelineConfig,
    seed: int,
    volumetric: bool = False,
    train_cases: int = 40,
    test_cases: int = 20,
    train_patients: int = 10,
    test_patients: int = 5,
    slices: int = 16,
    image_size: int = 64,
    channels: int = 16,
    noise: float = 0.5,
    prototype_distance: float = 2.0,
) -> dict[str, Path]:
    """Emit a synthetic dataset laid out for the other commands."""
    for resolution in config.resolutions:
        if resolution % 16 != 0:
            raise ValueError(f"resolution {resolution} is not divisible by the 16-px patch")
    grids = {r: (r // 16, r // 16) for r in config.resolutions}
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs: dict[str, Path] = {}
    if not volumetric:
        for split, count, tag in (("train", train_cases, 0), ("test", test_cases, 1)):
            records = []
            for i in range(count):
                case_seed = int(np.random.SeedSequence([seed, tag, i]).generate_state(1)[0])
                views, mask, guide = generate_case_multires(
                    case_seed, grids, channels, image_size, image_size,
                    noise_sigma=noise, prototype_distance=prototype_distance,
                    transforms=config.transforms,
                )
                records.append(_write_case(
                    out_dir, f"{split}_{i:03d}", views, mask, guide,
                    image_size, image_size,
                ))
            manifest_path = out_dir / f"{split}_manifest.jsonl"
            save_manifest(manifest_path, records)
            outputs[split] = manifest_path
            logger.info("wrote %d %s cases to %s", count, split, manifest_path)
    else:
        records = []
        split = {"train": [], "test": []}
        total = train_patients + test_patients
        for p in range(total):
            role = "train" if p < train_patients else "test"
            patient_id = f"pt{p:02d}"
            split[role].append(patient_id)
            patient_seed = int(np.random.SeedSequence([seed, 2, p]).generate_state(1)[0])
            for s in generate_synthetic_patient(
                patient_seed, slices, grids, channels, image_size, image_size,
                noise_sigma=noise, prototype_distance=prototype_distance,
                transforms=config.transforms,
            ):
                records.append(_write_case(
                    out_dir, f"{patient_id}_s{s.slice_index:02d}", s.views, s.mask,
                    s.guide, image_size, image_size,
                    patient_id=patient_id, slice_index=s.slice_index,
                ))
        manifest_path = out_dir / "manifest.jsonl"
        save_manifest(manifest_path, records)
        split_path = out_dir / "split.json"
        split_path.write_text(json.dumps(split, indent=2) + "\n", encoding="utf-8")
        outputs["manifest"] = manifest_path
        outputs["split"] = split_path
        logger.info("wrote %d patients (%d slices) to %s", total, len(records), out_dir)
    return outputs


# ---------------------------------------------------------------------------
# argument parsing


def _parse_reference(path: Path | None) -> float | None:
    if path is None:
        return None
    footer = parse_report_footer(path)
    if "mean_dice" not in footer:
        raise ValueError(f"{path} has no mean_dice footer entry")
    return float(footer["mean_dice"])


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
    parser = argparse.ArgumentParser(
        prog="mvrseg",
        description="Multi-view readout segmentation over precomputed feature grids.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit one probe per resolution")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="directory for probe files")
    _add_common_options(p)

    p = sub.add_parser("infer", help="write fused probability maps and masks")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--probes", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_common_options(p)

    p = sub.add_parser("eval", help="score saved predictions against the manifest")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--pred", type=Path, required=True, help="directory from `infer`")
    p.add_argument("--out", type=Path, required=True)
    _add_common_options(p)

    p = sub.add_parser("ablate", help="inference-view toggle table with fixed probes")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--probes", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_common_options(p)

    p = sub.add_parser("kpatient", help="K-labeled-patient learning curve")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--split", type=Path, required=True, help="JSON train/test patient ids")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--k-values", type=str, default="1,2,5,10")
    p.add_argument("--sample-seeds", type=str, default="0,1,2")
    p.add_argument("--reference", type=Path,
                   help="eval report whose mean_dice anchors percent-recovery")
    _add_common_options(p)

    p = sub.add_parser("zsweep", help="z-smoothing bandwidth sweep")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--probes", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--sigmas", type=str, default="0,2,3,4,5")
    _add_common_options(p)

    p = sub.add_parser("synth", help="emit a synthetic dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--volumetric", action="store_true")
    p.add_argument("--train-cases", type=int, default=40)
    p.add_argument("--test-cases", type=int, default=20)
    p.add_argument("--train-patients", type=int, default=10)
    p.add_argument("--test-patients", type=int, default=5)
    p.add_argument("--slices", type=int, default=16)
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--prototype-distance", type=float, default=2.0)
    _add_common_options(p)

    p = sub.add_parser("config", help="write the default configuration file")
    p.add_argument("--out", type=Path, help="target path (stdout when omitted)")

    args = parser.parse_args(argv)

    if args.command == "config":
        text = default_config_text()
        if args.out:
            args.out.write_text(text, encoding="utf-8")
        else:
            print(text, end="")
        return 0

    config = build_config(args)

    if args.command == "train":
        cmd_train(args.manifest, args.out, config)
    elif args.command == "infer":
        cmd_infer(args.manifest, args.probes, args.out, config)
    elif args.command == "eval":
        cmd_eval(args.manifest, args.pred, args.out, config)
    elif args.command == "ablate":
        cmd_ablate(args.manifest, args.probes, args.out, config)
    elif args.command == "kpatient":
        k_values = [int(x) for x in args.k_values.split(",")]
        seeds = [int(x) for x in args.sample_seeds.split(",")]
        cmd_kpatient(args.manifest, args.split, args.out / "probes", args.out, config,
                     k_values, seeds, _parse_reference(args.reference))
    elif args.command == "zsweep":
        sigmas = [float(x) for x in args.sigmas.split(",")]
        cmd_zsweep(args.manifest, args.probes, args.out, config, sigmas)
    elif args.command == "synth":
        seed = config.seed if args.seed is None else args.seed
        cmd_synth(
            args.out, config, seed,
            volumetric=args.volumetric,
            train_cases=args.train_cases, test_cases=args.test_cases,
            train_patients=args.train_patients, test_patients=args.test_patients,
            slices=args.slices, image_size=args.image_size, channels=args.channels,
            noise=args.noise, prototype_distance=args.prototype_distance,
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
