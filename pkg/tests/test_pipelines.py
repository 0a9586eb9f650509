import numpy as np
import pytest

from scalenorm import pipelines
from scalenorm.anchors import AnchorConfig
from scalenorm.chips import ChipConfig
from scalenorm.configfile import ToolkitConfig
from scalenorm.errors import ConfigurationError, IntegrityError
from scalenorm.fusion import Detection, SoftNmsParams
from scalenorm.geometry import Box
from scalenorm.pyramid import DEFAULT_SPECS, ResolutionSpec
from scalenorm.validity import SnipConfig


class TestAnchorsPipeline:
    def test_jobs_do_not_change_result(self, small_dataset):
        spec = ResolutionSpec(800, 1200)
        cfg = AnchorConfig()
        serial = pipelines.run_anchors(small_dataset, spec, cfg, jobs=1)
        parallel = pipelines.run_anchors(small_dataset, spec, cfg, jobs=4)
        assert serial.total_gt == parallel.total_gt
        np.testing.assert_array_equal(serial.max_ious, parallel.max_ious)
        assert serial.to_json_dict() == parallel.to_json_dict()

    def test_counts_exclude_crowd(self, small_dataset):
        report = pipelines.run_anchors(small_dataset, ResolutionSpec(800, 1200), AnchorConfig())
        non_crowd = sum(1 for a in small_dataset.annotations if not a.iscrowd)
        assert report.total_gt == non_crowd


class TestChipsPipeline:
    def test_rows_sorted_and_complete(self, small_dataset):
        rows, summary = pipelines.run_chips(
            small_dataset, ResolutionSpec(1400, 2000), ChipConfig(),
            SnipConfig(), seed=3, jobs=2,
        )
        ids = [r["image_id"] for r in rows]
        assert ids == sorted(ids)
        assert summary["images_with_targets"] == len(rows)
        assert summary["total_chips"] == sum(len(r["chips"]) for r in rows)
        for row in rows:
            covered = {i for group in row["covered"] for i in group}
            assert covered  # at least one target per emitted row
            assert 0 < row["efficiency"] <= 1.0

    def test_jobs_do_not_change_rows(self, small_dataset):
        args = (small_dataset, ResolutionSpec(1400, 2000), ChipConfig(), SnipConfig())
        r1, s1 = pipelines.run_chips(*args, seed=5, jobs=1)
        r2, s2 = pipelines.run_chips(*args, seed=5, jobs=3)
        assert r1 == r2 and s1 == s2

    def test_cover_all_targets_more(self, small_dataset):
        args = (small_dataset, ResolutionSpec(1400, 2000), ChipConfig(), SnipConfig())
        _, valid_summary = pipelines.run_chips(*args, cover="level-valid", seed=1)
        _, all_summary = pipelines.run_chips(*args, cover="all", seed=1)
        assert all_summary["images_with_targets"] >= valid_summary["images_with_targets"]


class TestFilterPipeline:
    def test_one_row_per_annotation_level(self, small_dataset):
        rows = pipelines.run_filter(small_dataset, SnipConfig())
        assert len(rows) == 3 * len(small_dataset.annotations)
        assert {r["level"] for r in rows} == {"480x800", "800x1200", "1400x2000"}
        for r in rows:
            assert set(r) == {"id", "level", "side", "valid", "reason"}

    def test_rpn_branch_uses_rpn_ranges(self, small_dataset):
        rcn = pipelines.run_filter(small_dataset, SnipConfig(), branch="rcn")
        rpn = pipelines.run_filter(small_dataset, SnipConfig(), branch="rpn")
        # the rpn (800,1200) range [0,160] admits everything the rcn [40,160] does and more
        rcn_valid = sum(r["valid"] for r in rcn if r["level"] == "800x1200")
        rpn_valid = sum(r["valid"] for r in rpn if r["level"] == "800x1200")
        assert rpn_valid >= rcn_valid


class TestFusePipeline:
    def test_unknown_image_rejected(self, small_dataset):
        d = Detection(box=Box(0, 0, 10, 10), score=0.5, class_id=1, image_id=10**9)
        with pytest.raises(IntegrityError):
            pipelines.run_fuse(small_dataset, {"800x1200": [d]}, DEFAULT_SPECS,
                               SnipConfig(), SoftNmsParams())

    def test_unknown_level_rejected(self, small_dataset):
        image_id = small_dataset.images[0].id
        d = Detection(box=Box(0, 0, 100, 100), score=0.5, class_id=1, image_id=image_id)
        with pytest.raises(ConfigurationError):
            pipelines.run_fuse(small_dataset, {"3x3": [d]}, DEFAULT_SPECS,
                               SnipConfig(), SoftNmsParams())

    def test_roundtrip_through_original_frame(self, small_dataset):
        im = small_dataset.images[0]
        from scalenorm.pyramid import build_plan
        plan = build_plan(im.size, DEFAULT_SPECS)
        f = plan.level("800x1200").factor
        d = Detection(box=Box(10 * f, 12 * f, 100 * f, 100 * f), score=0.9,
                      class_id=1, image_id=im.id)
        [out] = pipelines.run_fuse(small_dataset, {"800x1200": [d]}, DEFAULT_SPECS,
                                   SnipConfig(), SoftNmsParams())
        assert out.box.x == pytest.approx(10, abs=1e-9)
        assert out.box.side == pytest.approx(100, abs=1e-9)


class TestSimulatePipeline:
    def test_default_protocol_rows(self):
        cfg = ToolkitConfig()
        rows = pipelines.run_simulate(cfg, seed=4)
        assert [r["protocol"] for r in rows] == list(cfg.simulation.protocols)

    def test_unknown_protocol(self):
        with pytest.raises(ConfigurationError):
            pipelines.run_simulate(ToolkitConfig(), protocol_names=["not_a_protocol"])

    def test_table_rendering(self):
        rows = pipelines.run_simulate(ToolkitConfig(), seed=4)
        table = pipelines.simulate_table(rows)
        lines = table.splitlines()
        assert len(lines) == 2
        assert "snip" in lines[0]


class TestRenderers:
    def test_eval_table_handles_none(self):
        table = pipelines.eval_table({"ap": 0.5, "ap50": 1.0, "ap75": None,
                                      "ap_small": 0.123, "ap_medium": None,
                                      "ap_large": 0.0, "per_class": {}})
        assert "50.0" in table and "100.0" in table and "n/a" in table

    def test_stats_csv(self, small_dataset):
        stats = pipelines.run_stats(small_dataset)
        csv = pipelines.stats_histogram_csv(stats)
        lines = csv.strip().splitlines()
        assert lines[0] == "bin_low,bin_high,fraction"
        assert len(lines) == 101
