"""Command-level tests on tiny synthetic datasets."""

import pytest

from mvrseg.cli import (
    ablation_variants,
    build_config,
    cmd_ablate,
    cmd_eval,
    cmd_infer,
    cmd_synth,
    cmd_train,
    cmd_zsweep,
    main,
)
from mvrseg.manifest import ManifestError, load_manifest
from mvrseg.pipeline import PipelineConfig
from mvrseg.probe import TrainConfig
from mvrseg.report import parse_report_footer


SMALL = PipelineConfig(
    resolutions=(128, 256),
    train=TrainConfig(epochs=3, batch_size=4, hidden=8),
)


@pytest.fixture(scope="module")
def dataset_2d(tmp_path_factory):
    out = tmp_path_factory.mktemp("data2d")
    paths = cmd_synth(out, SMALL, seed=5, train_cases=6, test_cases=4,
                      image_size=32, channels=8, noise=0.4)
    return paths


@pytest.fixture(scope="module")
def trained_2d(dataset_2d, tmp_path_factory):
    out = tmp_path_factory.mktemp("probes2d")
    cmd_train(dataset_2d["train"], out, SMALL)
    return out


class TestSynth:
    def test_manifests_load_and_views_complete(self, dataset_2d):
        records = load_manifest(dataset_2d["train"])
        assert len(records) == 6
        from mvrseg.manifest import require_views

        require_views(records, SMALL.resolutions, SMALL.transforms)

    def test_rejects_non_patch_resolution(self, tmp_path):
        with pytest.raises(ValueError, match="divisible"):
            cmd_synth(tmp_path, PipelineConfig(resolutions=(100,)), seed=0)


class TestTrainInferEval:
    def test_probe_files_written(self, trained_2d):
        assert (trained_2d / "probe_r128.mvrp").exists()
        assert (trained_2d / "probe_r256.mvrp").exists()

    def test_infer_eval_report(self, dataset_2d, trained_2d, tmp_path):
        preds = tmp_path / "preds"
        written = cmd_infer(dataset_2d["test"], trained_2d, preds, SMALL)
        assert len(written) == 4
        assert (preds / "test_000_prob.npy").exists()
        assert (preds / "test_000_mask.png").exists()
        out = tmp_path / "eval"
        agg = cmd_eval(dataset_2d["test"], preds, out, SMALL)
        assert 0.0 <= agg.mean_dice <= 1.0
        report = (out / "eval_report.tsv").read_text()
        lines = report.splitlines()
        assert lines[0] == "case_id\tdice\tiou\thd95"
        assert lines[1].startswith("test_000\t")
        footer = parse_report_footer(out / "eval_report.tsv")
        assert footer["cases"] == "4"
        assert "/4 (" in footer["hd95_failures"]
        assert (out / "eval_dice_hist.png").stat().st_size > 0

    def test_missing_probe_error(self, dataset_2d, tmp_path):
        with pytest.raises(FileNotFoundError, match="no trained probe"):
            cmd_infer(dataset_2d["test"], tmp_path, tmp_path / "x", SMALL)

    def test_undeclared_view_fails_before_compute(self, dataset_2d, trained_2d, tmp_path):
        wider = PipelineConfig(resolutions=(128, 512), train=SMALL.train)
        with pytest.raises(ManifestError, match="does not declare view"):
            cmd_infer(dataset_2d["test"], trained_2d, tmp_path / "y", wider)


class TestAblate:
    def test_row_structure_and_deltas(self, dataset_2d, trained_2d, tmp_path):
        rows = cmd_ablate(dataset_2d["test"], trained_2d, tmp_path, SMALL)
        labels = [r["configuration"] for r in rows]
        assert labels == [
            "full",
            "w/o densecrf",
            "w/o flip tta",
            "128 only",
            "256 only",
            "w/o tta and densecrf",
            "raw 128 readout",
            "raw 256 readout",
        ]
        assert rows[0]["delta_dice"] == 0.0
        assert (tmp_path / "ablation_report.tsv").exists()
        assert (tmp_path / "ablation_delta.png").stat().st_size > 0

    def test_variants_respect_flags(self):
        cfg = PipelineConfig(resolutions=(128,), transforms=("id",), use_crf=False)
        labels = [label for label, _ in ablation_variants(cfg)]
        assert labels == ["full", "raw 128 readout"]


@pytest.fixture(scope="module")
def dataset_vol(tmp_path_factory):
    out = tmp_path_factory.mktemp("datavol")
    cfg = PipelineConfig(resolutions=(128,), use_crf=False,
                         train=TrainConfig(epochs=2, batch_size=4, hidden=8))
    paths = cmd_synth(out, cfg, seed=9, volumetric=True, train_patients=2,
                      test_patients=1, slices=8, image_size=32, channels=8, noise=0.6)
    return cfg, paths


class TestVolumetricCommands:
    def test_zsweep_rows(self, dataset_vol, tmp_path):
        cfg, paths = dataset_vol
        probes_dir = tmp_path / "probes"
        cmd_train(paths["manifest"], probes_dir, cfg)
        rows = cmd_zsweep(paths["manifest"], probes_dir, tmp_path / "sweep", cfg)
        assert [r["sigma_z"] for r in rows] == [0.0, 2.0, 3.0, 4.0, 5.0]
        assert rows[0]["delta_dice"] == "baseline"
        assert (tmp_path / "sweep" / "zsweep_report.tsv").exists()
        assert (tmp_path / "sweep" / "zsweep.png").stat().st_size > 0

    def test_zsweep_rejects_2d_manifest(self, dataset_2d, trained_2d, tmp_path):
        with pytest.raises(ManifestError, match="volumetric"):
            cmd_zsweep(dataset_2d["test"], trained_2d, tmp_path, SMALL)

    def test_volumetric_eval(self, dataset_vol, tmp_path):
        cfg, paths = dataset_vol
        probes_dir = tmp_path / "p2"
        cmd_train(paths["manifest"], probes_dir, cfg)
        preds = tmp_path / "preds"
        cmd_infer(paths["manifest"], probes_dir, preds, cfg)
        agg = cmd_eval(paths["manifest"], preds, tmp_path / "ev", cfg)
        assert agg.total_cases == 3  # per patient, not per slice


class TestMain:
    def test_config_subcommand(self, tmp_path, capsys):
        assert main(["config"]) == 0
        out = capsys.readouterr().out
        assert "tau = 0.3" in out
        assert "sigma_z = 4.0" in out
        target = tmp_path / "cfg.txt"
        assert main(["config", "--out", str(target)]) == 0
        assert "resolutions = 512,1024" in target.read_text()

    def test_flag_overrides(self):
        import argparse

        args = argparse.Namespace(
            config=None, seed=7, tau=0.2, sigma_z=1.0, threshold=0.4,
            no_crf=True, no_tta=True, resolutions="128,256",
            crf_iters=2, crf_weights="1,2", crf_bandwidths="2,20,10",
        )
        cfg = build_config(args)
        assert cfg.tau == 0.2
        assert cfg.resolutions == (128, 256)
        assert cfg.transforms == ("id",)
        assert cfg.use_crf is False
        assert cfg.crf.iterations == 2
        assert cfg.crf.w_bilateral == 2.0
        assert cfg.crf.sigma_rgb == 10.0
        assert cfg.seed == 7 and cfg.train.seed == 7

    def test_end_to_end_argv(self, tmp_path):
        data = tmp_path / "d"
        cfg_file = tmp_path / "cfg.txt"
        cfg_file.write_text("epochs = 2\nbatch_size = 4\nhidden = 8\n")
        rc = main([
            "synth", "--out", str(data), "--train-cases", "3", "--test-cases", "2",
            "--image-size", "32", "--channels", "6", "--resolutions", "128,256",
            "--seed", "1",
        ])
        assert rc == 0
        rc = main([
            "train", "--manifest", str(data / "train_manifest.jsonl"),
            "--out", str(tmp_path / "pr"), "--resolutions", "128,256", "--seed", "1",
            "--config", str(cfg_file),
        ])
        assert rc == 0
        assert (tmp_path / "pr" / "probe_r128.mvrp").exists()
