import json
import math

import numpy as np
import pytest

from scalenorm.coco import (Dataset, from_coco_dict, load_dataset, load_results,
                            save_results, scale_stats, to_coco_dict)
from scalenorm.errors import DatasetError, IntegrityError, ParseError
from scalenorm.fusion import Detection
from scalenorm.geometry import Box


def minimal_doc():
    return {
        "images": [{"id": 1, "width": 640, "height": 480, "file_name": "a.jpg"}],
        "annotations": [{"id": 1, "image_id": 1, "category_id": 1,
                         "bbox": [10, 10, 100, 50], "area": 4000, "iscrowd": 0}],
        "categories": [{"id": 1, "name": "thing"}],
    }


class TestLoadDataset:
    def test_minimal_counts(self, tmp_path):
        path = tmp_path / "inst.json"
        path.write_text(json.dumps(minimal_doc()))
        ds = load_dataset(path)
        assert (len(ds.images), len(ds.annotations), len(ds.categories)) == (1, 1, 1)
        assert ds.annotations[0].box == Box(10, 10, 100, 50)
        assert ds.annotations[0].area == 4000

    def test_missing_image_reference(self, tmp_path):
        doc = minimal_doc()
        doc["annotations"][0]["image_id"] = 999
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(IntegrityError, match="999"):
            load_dataset(path)

    def test_missing_category_reference(self):
        doc = minimal_doc()
        doc["annotations"][0]["category_id"] = 5
        with pytest.raises(IntegrityError, match="category id 5"):
            from_coco_dict(doc)

    def test_malformed_json_reports_offset(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"images": [}')
        with pytest.raises(ParseError) as err:
            load_dataset(path)
        assert err.value.offset == 12

    def test_small_overrun_clipped(self):
        doc = minimal_doc()
        doc["annotations"][0]["bbox"] = [639.0, 10, 2.5, 20]  # 1.5 px overrun
        ds = from_coco_dict(doc)
        assert ds.annotations[0].box == Box(639.0, 10, 1.0, 20)
        assert ds.warnings == ()

    def test_large_overrun_warned_not_clipped(self):
        doc = minimal_doc()
        doc["annotations"][0]["bbox"] = [600, 10, 100, 20]  # 60 px overrun
        ds = from_coco_dict(doc)
        assert ds.annotations[0].box == Box(600, 10, 100, 20)
        assert len(ds.warnings) == 1
        assert "overruns" in ds.warnings[0]

    def test_roundtrip(self):
        ds = from_coco_dict(minimal_doc())
        again = from_coco_dict(to_coco_dict(ds))
        assert ds == again


class TestResults:
    def test_roundtrip(self, tmp_path):
        dets = [
            Detection(box=Box(1, 2, 3, 4), score=0.5, class_id=7, image_id=1),
            Detection(box=Box(5, 6, 7, 8), score=0.25, class_id=2, image_id=3,
                      source_level="800x1200"),
        ]
        path = tmp_path / "res.json"
        save_results(dets, path)
        assert load_results(path) == dets

    def test_results_must_be_array(self, tmp_path):
        path = tmp_path / "res.json"
        path.write_text("{}")
        with pytest.raises(ParseError):
            load_results(path)


class TestScaleStats:
    def make(self, rel_areas, image_area=640 * 480, crowd_flags=None):
        crowd_flags = crowd_flags or [0] * len(rel_areas)
        doc = {
            "images": [{"id": 1, "width": 640, "height": 480}],
            "annotations": [
                {"id": i + 1, "image_id": 1, "category_id": 1,
                 "bbox": [0, 0, 10, 10], "area": rel * rel * image_area,
                 "iscrowd": crowd_flags[i]}
                for i, rel in enumerate(rel_areas)
            ],
            "categories": [{"id": 1, "name": "c"}],
        }
        return from_coco_dict(doc)

    def test_whole_image_object(self):
        ds = self.make([1.0])
        st = scale_stats(ds)
        assert st.quantiles[50] == pytest.approx(1.0)

    def test_sorted_triple_median(self):
        st = scale_stats(self.make([0.1, 0.4, 0.2]))
        assert st.quantiles[50] == pytest.approx(0.2)
        assert st.quantiles[10] == pytest.approx(0.12)  # linear interpolation
        assert st.quantiles[90] == pytest.approx(0.36)

    def test_duplication_invariant(self):
        # linear-interpolated quantiles drift by at most one order-statistic
        # gap under duplication; with a dense sample that is negligible
        rng = np.random.default_rng(17)
        rels = rng.uniform(0.01, 0.99, 400).tolist()
        single = scale_stats(self.make(rels))
        doubled = scale_stats(self.make(rels + rels))
        for p in (10, 50, 90):
            assert single.quantiles[p] == pytest.approx(doubled.quantiles[p], abs=5e-3)
        assert single.histogram == doubled.histogram

    def test_crowd_excluded(self):
        st = scale_stats(self.make([0.1, 0.9], crowd_flags=[0, 1]))
        assert len(st.scales) == 1
        assert st.quantiles[50] == pytest.approx(0.1)

    def test_empty_raises(self):
        ds = self.make([0.5], crowd_flags=[1])
        with pytest.raises(DatasetError):
            scale_stats(ds)

    def test_oversized_scale_reported_not_clipped(self):
        ds = self.make([1.2])
        st = scale_stats(ds)
        assert any("exceeds 1" in w for w in st.warnings)
        assert st.scales[0] == pytest.approx(1.2)

    def test_box_area_switch(self):
        ds = self.make([0.5])  # bbox is 10x10 but area field says rel 0.5
        st = scale_stats(ds, use_box_area=True)
        assert st.quantiles[50] == pytest.approx(math.sqrt(100 / (640 * 480)))

    def test_histogram_sums_to_one(self):
        rng = np.random.default_rng(1)
        st = scale_stats(self.make(rng.uniform(0.01, 0.99, 50).tolist()))
        assert sum(st.histogram) == pytest.approx(1.0)
        assert len(st.histogram) == 100


@pytest.mark.skipif("SCALENORM_COCO_VAL" not in __import__("os").environ,
                    reason="set SCALENORM_COCO_VAL to run against a real instances file")
def test_real_instances_counts_match_file():
    import os
    path = os.environ["SCALENORM_COCO_VAL"]
    raw = json.load(open(path))
    ds = load_dataset(path)
    assert len(ds.images) == len(raw["images"])
    assert len(ds.annotations) == len(raw["annotations"])
    assert len(ds.categories) == len(raw["categories"])
