import json

import pytest

from scalenorm.coco import save_results, to_coco_dict
from scalenorm.fusion import Detection
from scalenorm.synthetic import PopulationConfig, generate_dataset


@pytest.fixture(scope="session")
def small_dataset():
    return generate_dataset(PopulationConfig(images=60), seed=101)


@pytest.fixture(scope="session")
def small_dataset_path(small_dataset, tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "instances.json"
    path.write_text(json.dumps(to_coco_dict(small_dataset)))
    return path


@pytest.fixture(scope="session")
def perfect_results_path(small_dataset, tmp_path_factory):
    """Detections identical to every non-crowd ground truth, score 1."""
    dets = [
        Detection(box=a.box, score=1.0, class_id=a.category_id, image_id=a.image_id)
        for a in small_dataset.annotations
        if not a.iscrowd
    ]
    path = tmp_path_factory.mktemp("data") / "perfect.json"
    save_results(dets, path)
    return path


@pytest.fixture()
def tiny_dataset_path(tmp_path):
    doc = {
        "images": [{"id": 1, "width": 480, "height": 640}],
        "annotations": [
            {"id": 1, "image_id": 1, "category_id": 1, "bbox": [10, 10, 60, 60],
             "area": 3600, "iscrowd": 0},
            {"id": 2, "image_id": 1, "category_id": 1, "bbox": [200, 200, 150, 150],
             "area": 22500, "iscrowd": 0},
        ],
        "categories": [{"id": 1, "name": "thing"}],
    }
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(doc))
    return path
