import pytest
from fastapi.testclient import TestClient

from scalenorm.coco import to_coco_dict
from scalenorm.service import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def dataset_payload(ds):
    return to_coco_dict(ds)


class TestHealthAndDefaults:
    def test_health(self, client):
        r = client.get("/health")
        assert r.status_code == 200
        assert r.json() == {"status": "ok"}

    def test_defaults_expose_reference_config(self, client):
        doc = client.get("/defaults").json()
        assert doc["validity"]["rcn_ranges"]["1400x2000"] == [0, 80]
        assert doc["chips"]["chip_size"] == 1000
        assert doc["anchors"]["stride"] == 16


class TestPlanEndpoint:
    def test_default_specs(self, client):
        r = client.post("/plan", json={"image": {"width": 480, "height": 640}})
        assert r.status_code == 200
        doc = r.json()
        assert len(doc["levels"]) == 3
        assert doc["levels"][1]["factor"] == pytest.approx(5 / 3)

    def test_custom_spec(self, client):
        r = client.post("/plan", json={
            "image": {"width": 1000, "height": 1000},
            "specs": [{"shorter": 500, "max_side": 500}],
        })
        assert r.json()["levels"][0]["factor"] == pytest.approx(0.5)

    def test_invalid_image_rejected(self, client):
        r = client.post("/plan", json={"image": {"width": 0, "height": 10}})
        assert r.status_code == 422


class TestFilterEndpoint:
    def test_default_ranges(self, client):
        r = client.post("/filter", json={
            "subjects": [{"id": 1, "bbox": [0, 0, 150, 150]}],
        })
        assert r.status_code == 200
        verdicts = r.json()["verdicts"]
        by_level = {v["level"]: v["valid"] for v in verdicts}
        assert by_level == {"480x800": True, "800x1200": True, "1400x2000": False}

    def test_custom_ranges(self, client):
        r = client.post("/filter", json={
            "subjects": [{"id": "a", "bbox": [0, 0, 150, 150]}],
            "ranges": {"160x200": [160, None]},
        })
        [v] = r.json()["verdicts"]
        assert v["valid"] is False and v["reason"] == "below-range"


class TestDatasetEndpoints:
    def test_stats(self, client, small_dataset):
        r = client.post("/stats", json={"dataset": dataset_payload(small_dataset)})
        assert r.status_code == 200
        assert r.json()["instances"] > 0

    def test_anchors(self, client, small_dataset):
        r = client.post("/anchors", json={"dataset": dataset_payload(small_dataset)})
        assert r.status_code == 200
        doc = r.json()
        assert doc["total_gt"] > 0 and "0.7" in doc["fractions"]

    def test_chips(self, client, small_dataset):
        r = client.post("/chips", json={"dataset": dataset_payload(small_dataset), "seed": 3})
        assert r.status_code == 200
        doc = r.json()
        assert doc["summary"]["images_with_targets"] == len(doc["images"])

    def test_integrity_error_maps_to_400(self, client):
        r = client.post("/stats", json={"dataset": {
            "images": [{"id": 1, "width": 100, "height": 100}],
            "annotations": [{"id": 1, "image_id": 2, "category_id": 1,
                             "bbox": [0, 0, 5, 5]}],
            "categories": [{"id": 1, "name": "x"}],
        }})
        assert r.status_code == 400
        assert "missing image id 2" in r.json()["detail"]


class TestEvalEndpoint:
    def test_perfect_detections(self, client, small_dataset):
        dets = [
            {"image_id": a.image_id, "category_id": a.category_id,
             "bbox": [a.box.x, a.box.y, a.box.w, a.box.h], "score": 1.0}
            for a in small_dataset.annotations if not a.iscrowd
        ]
        r = client.post("/eval", json={"dataset": dataset_payload(small_dataset),
                                       "detections": dets})
        assert r.status_code == 200
        assert r.json()["ap"] == pytest.approx(1.0)

    def test_proposal_mode(self, client, small_dataset):
        dets = [
            {"image_id": a.image_id, "category_id": 0,
             "bbox": [a.box.x, a.box.y, a.box.w, a.box.h], "score": 0.9}
            for a in small_dataset.annotations if not a.iscrowd
        ]
        r = client.post("/eval", json={"dataset": dataset_payload(small_dataset),
                                       "detections": dets, "proposals": True,
                                       "budget": 300})
        assert r.status_code == 200
        assert r.json()["ar"] == pytest.approx(1.0)


class TestFuseEndpoint:
    def test_three_level_fusion(self, client):
        images = [{"id": 1, "width": 480, "height": 640}]
        from scalenorm.pyramid import DEFAULT_SPECS, build_plan
        from scalenorm.geometry import ImageSize
        plan = build_plan(ImageSize(480, 640), DEFAULT_SPECS)
        per_level = {}
        for lvl in plan.levels:
            f = lvl.factor
            per_level[lvl.key] = [{
                "image_id": 1, "category_id": 1,
                "bbox": [10 * f, 10 * f, 150 * f, 150 * f], "score": 0.9,
            }]
        r = client.post("/fuse", json={"images": images, "per_level": per_level})
        assert r.status_code == 200
        dets = r.json()["detections"]
        assert {d["level"] for d in dets} == {"480x800", "800x1200"}

    def test_unknown_level_maps_to_422(self, client):
        r = client.post("/fuse", json={
            "images": [{"id": 1, "width": 480, "height": 640}],
            "per_level": {"9x9": [{"image_id": 1, "category_id": 1,
                                    "bbox": [0, 0, 5, 5], "score": 0.5}]},
        })
        assert r.status_code == 422


class TestEnsembleEndpoint:
    def test_average(self, client):
        models = [
            [{"bbox": [0, 0, 10, 10], "score": 0.6}],
            [{"bbox": [2, 2, 10, 10], "score": 0.8}],
        ]
        r = client.post("/ensemble", json={"models": models})
        assert r.status_code == 200
        [d] = r.json()["detections"]
        assert d["score"] == pytest.approx(0.7)
        assert d["bbox"] == [1, 1, 10, 10]

    def test_misaligned_maps_to_422(self, client):
        r = client.post("/ensemble", json={"models": [
            [{"bbox": [0, 0, 10, 10], "score": 0.6}], [],
        ]})
        assert r.status_code == 422


class TestSimulateEndpoint:
    def test_synthetic_population(self, client):
        r = client.post("/simulate", json={"population_images": 100, "seed": 3})
        assert r.status_code == 200
        rows = r.json()["reports"]
        scores = {x["protocol"]: x["score"] for x in rows}
        assert max(scores, key=scores.get) == "snip"

    def test_unknown_protocol_maps_to_422(self, client):
        r = client.post("/simulate", json={"protocols": ["bogus"]})
        assert r.status_code == 422
