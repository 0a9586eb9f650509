"""Pydantic request/response models for the HTTP service.

Wire formats mirror the file formats: detections travel as COCO-results
objects, datasets as COCO-instances objects, ranges as [lo, hi-or-null].
"""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field

from ..coco import Dataset, from_coco_dict
from ..fusion import Detection, Box


class ImageModel(BaseModel):
    id: int
    width: int
    height: int
    file_name: Optional[str] = None


class AnnotationModel(BaseModel):
    id: int
    image_id: int
    category_id: int
    bbox: tuple[float, float, float, float]
    area: Optional[float] = None
    iscrowd: int = 0


class CategoryModel(BaseModel):
    id: int
    name: str = ""


class DatasetModel(BaseModel):
    images: list[ImageModel]
    annotations: list[AnnotationModel] = Field(default_factory=list)
    categories: list[CategoryModel] = Field(default_factory=list)

    def to_dataset(self) -> Dataset:
        doc = self.model_dump(exclude_none=True)
        for ann in doc["annotations"]:
            ann.setdefault("area", ann["bbox"][2] * ann["bbox"][3])
        return from_coco_dict(doc)


class DetectionModel(BaseModel):
    image_id: int = 0
    category_id: int = 0
    bbox: tuple[float, float, float, float]
    score: float
    level: Optional[str] = None
    class_scores: Optional[dict[int, float]] = None

    def to_detection(self) -> Detection:
        x, y, w, h = self.bbox
        return Detection(box=Box(x, y, w, h), score=self.score, class_id=self.category_id,
                         image_id=self.image_id, source_level=self.level,
                         class_scores=self.class_scores)

    @classmethod
    def from_detection(cls, d: Detection) -> "DetectionModel":
        return cls(image_id=d.image_id, category_id=d.class_id,
                   bbox=(d.box.x, d.box.y, d.box.w, d.box.h), score=d.score,
                   level=d.source_level, class_scores=d.class_scores)


class SizeModel(BaseModel):
    width: int
    height: int


class SpecModel(BaseModel):
    shorter: int
    max_side: int


class PlanRequest(BaseModel):
    image: SizeModel
    specs: Optional[list[SpecModel]] = None


class SubjectModel(BaseModel):
    id: int | str
    bbox: tuple[float, float, float, float]


class FilterRequest(BaseModel):
    subjects: list[SubjectModel]
    branch: str = "rcn"
    ranges: Optional[dict[str, tuple[float, Optional[float]]]] = None


class VerdictModel(BaseModel):
    id: int | str
    level: str
    side: float
    valid: bool
    reason: str


class AnchorsRequest(BaseModel):
    dataset: DatasetModel
    spec: Optional[SpecModel] = None
    improved: bool = False
    jobs: int = 1


class ChipsRequest(BaseModel):
    dataset: DatasetModel
    spec: Optional[SpecModel] = None
    cover: Optional[str] = None
    seed: int = 0
    jobs: int = 1


class FuseRequest(BaseModel):
    images: list[ImageModel]
    per_level: dict[str, list[DetectionModel]]
    specs: Optional[list[SpecModel]] = None


class EnsembleRequest(BaseModel):
    models: list[list[DetectionModel]]


class EvalRequest(BaseModel):
    dataset: DatasetModel
    detections: list[DetectionModel]
    proposals: bool = False
    budget: Optional[int] = None


class StatsRequest(BaseModel):
    dataset: DatasetModel
    use_box_area: bool = False


class SimulateRequest(BaseModel):
    dataset: Optional[DatasetModel] = None
    population_images: Optional[int] = None
    protocols: Optional[list[str]] = None
    seed: int = 0
