import numpy as np
import pytest

from mvrseg.formats import write_feature_stack
from mvrseg.grid import FeatureStack
from mvrseg.manifest import (
    CaseRecord,
    ManifestError,
    load_guide,
    load_manifest,
    load_mask,
    require_views,
    save_guide,
    save_manifest,
    save_mask,
)
from mvrseg.sampling import Xorshift64, sample_without_replacement, splitmix64


def write_case(tmp_path, case_id, resolutions=(128,), transforms=("id",), patient=None,
               slice_index=None, size=8):
    rng = np.random.default_rng(hash(case_id) % (2**31))
    view_paths = {}
    (tmp_path / "f").mkdir(exist_ok=True)
    for r in resolutions:
        for t in transforms:
            p = tmp_path / "f" / f"{case_id}_{r}_{t}.mvrf"
            write_feature_stack(
                p, FeatureStack(rng.normal(size=(4, 4, 3)).astype(np.float32), r, t)
            )
            view_paths[(r, t)] = p
    mask_path = tmp_path / "f" / f"{case_id}_mask.png"
    save_mask(mask_path, (rng.random((size, size)) > 0.5).astype(np.uint8))
    guide_path = tmp_path / "f" / f"{case_id}_guide.png"
    save_guide(guide_path, rng.uniform(0, 255, size=(size, size, 3)))
    return CaseRecord(
        case_id=case_id, height=size, width=size, view_paths=view_paths,
        mask_path=mask_path, guide_path=guide_path,
        patient_id=patient, slice_index=slice_index,
    )


class TestManifestRoundTrip:
    def test_save_load(self, tmp_path):
        records = [write_case(tmp_path, f"c{i}") for i in range(3)]
        path = tmp_path / "manifest.jsonl"
        save_manifest(path, records)
        loaded = load_manifest(path)
        assert [r.case_id for r in loaded] == ["c0", "c1", "c2"]
        assert loaded[0].view_paths[(128, "id")].exists()
        assert loaded[0].mask_path.exists()

    def test_volumetric_fields(self, tmp_path):
        records = [
            write_case(tmp_path, f"p0_s{i}", patient="p0", slice_index=i) for i in range(2)
        ]
        path = tmp_path / "manifest.jsonl"
        save_manifest(path, records)
        loaded = load_manifest(path)
        assert all(r.is_volumetric for r in loaded)
        assert loaded[1].slice_index == 1

    def test_duplicate_case_id(self, tmp_path):
        records = [write_case(tmp_path, "c0"), write_case(tmp_path, "c0")]
        path = tmp_path / "manifest.jsonl"
        save_manifest(path, records)
        with pytest.raises(ManifestError, match="duplicate"):
            load_manifest(path)

    def test_missing_view_file(self, tmp_path):
        record = write_case(tmp_path, "c0")
        record.view_paths[(128, "id")].unlink()
        path = tmp_path / "manifest.jsonl"
        save_manifest(path, [record])
        with pytest.raises(ManifestError, match="missing file"):
            load_manifest(path)

    def test_patient_dimension_mismatch(self, tmp_path):
        a = write_case(tmp_path, "p0_s0", patient="p0", slice_index=0, size=8)
        b = write_case(tmp_path, "p0_s1", patient="p0", slice_index=1, size=10)
        path = tmp_path / "manifest.jsonl"
        save_manifest(path, [a, b])
        with pytest.raises(ManifestError, match="mixes slice dimensions"):
            load_manifest(path)

    def test_empty_manifest(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        path.write_text("\n")
        with pytest.raises(ManifestError, match="no cases"):
            load_manifest(path)

    def test_invalid_json_line(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        path.write_text("{broken\n")
        with pytest.raises(ManifestError, match="invalid JSON"):
            load_manifest(path)

    def test_save_from_relative_paths(self, tmp_path, monkeypatch):
        # CLI invocations use cwd-relative output directories
        monkeypatch.chdir(tmp_path)
        from pathlib import Path

        Path("data").mkdir()
        record = write_case(Path("data"), "c0")
        save_manifest(Path("data") / "manifest.jsonl", [record])
        loaded = load_manifest(Path("data") / "manifest.jsonl")
        assert loaded[0].view_paths[(128, "id")].exists()


class TestRequireViews:
    def test_declared_views_pass(self, tmp_path):
        records = [write_case(tmp_path, "c0", resolutions=(128, 256), transforms=("id", "hflip"))]
        require_views(records, [128, 256], ["id", "hflip"])

    def test_undeclared_view_fails_before_compute(self, tmp_path):
        records = [write_case(tmp_path, "c0", resolutions=(128,), transforms=("id",))]
        with pytest.raises(ManifestError, match="does not declare view"):
            require_views(records, [128], ["id", "hflip"])


class TestImageIo:
    def test_mask_round_trip(self, tmp_path):
        mask = (np.random.default_rng(0).random((9, 7)) > 0.4).astype(np.uint8)
        path = tmp_path / "m.png"
        save_mask(path, mask)
        np.testing.assert_array_equal(load_mask(path), mask)

    def test_guide_round_trip(self, tmp_path):
        guide = np.random.default_rng(1).integers(0, 256, size=(5, 6, 3)).astype(np.float64)
        path = tmp_path / "g.png"
        save_guide(path, guide)
        np.testing.assert_array_equal(load_guide(path), guide)


class TestSampling:
    def test_splitmix_reference_vector(self):
        # first outputs of the published splitmix64 sequence for state 0
        assert splitmix64(0) == 0xE220A8397B1DCDAF
        assert splitmix64(1) == 0x910A2DEC89025CC1

    def test_xorshift_deterministic(self):
        a = Xorshift64(42)
        b = Xorshift64(42)
        assert [a.next_u64() for _ in range(5)] == [b.next_u64() for _ in range(5)]

    def test_sample_is_subset_without_replacement(self):
        ids = [f"p{i}" for i in range(20)]
        chosen = sample_without_replacement(ids, 7, seed=3)
        assert len(chosen) == 7
        assert len(set(chosen)) == 7
        assert set(chosen) <= set(ids)

    def test_sample_order_independent_of_input_order(self):
        ids = [f"p{i}" for i in range(8)]
        a = sample_without_replacement(ids, 3, seed=0)
        b = sample_without_replacement(ids[::-1], 3, seed=0)
        assert a == b == ["p4", "p0", "p7"]

    def test_sample_full_population(self):
        ids = ["a", "b", "c"]
        assert sorted(sample_without_replacement(ids, 3, seed=9)) == ids

    def test_sample_bounds(self):
        with pytest.raises(ValueError):
            sample_without_replacement(["a"], 2, seed=0)
        with pytest.raises(ValueError):
            Xorshift64(0).next_below(0)
