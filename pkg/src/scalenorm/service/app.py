"""HTTP service wrapping the pipeline handlers.

Each endpoint is a stateless wrapper over the same functions the CLI
calls; the service holds only an immutable ToolkitConfig. Configuration
errors map to 422, data-integrity errors to 400.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import pipelines
from ..configfile import ToolkitConfig
from ..errors import DatasetError, ScaleNormError
from ..fusion import ensemble_average
from ..geometry import Box, ImageSize
from ..pyramid import ResolutionSpec
from ..synthetic import PopulationConfig
from ..validity import judge_box, ValidRange
from . import schemas


def create_app(config: ToolkitConfig | None = None) -> FastAPI:
    cfg = config or ToolkitConfig()
    app = FastAPI(title="scalenorm", version="0.1.0",
                  description="Scale-aware pyramid planning, validity filtering, "
                              "chip sampling, detection fusion and evaluation.")

    @app.exception_handler(ScaleNormError)
    async def _scalenorm_error(_: Request, exc: ScaleNormError):
        if isinstance(exc, DatasetError):
            return JSONResponse(status_code=400, content={"detail": str(exc)})
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(ValueError)
    async def _value_error(_: Request, exc: ValueError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/defaults")
    def defaults():
        return cfg.model_dump()

    @app.post("/plan")
    def plan(req: schemas.PlanRequest):
        specs = (
            tuple(ResolutionSpec(s.shorter, s.max_side) for s in req.specs)
            if req.specs else cfg.pyramid.to_specs()
        )
        return pipelines.run_plan(ImageSize(req.image.width, req.image.height), specs)

    @app.post("/filter")
    def filter_boxes(req: schemas.FilterRequest):
        if req.ranges is not None:
            ranges = {k: ValidRange.from_json(v) for k, v in req.ranges.items()}
        else:
            snip = cfg.validity.to_snip_config()
            ranges = snip.rcn_ranges if req.branch == "rcn" else snip.rpn_ranges
        levels = sorted(ranges, key=lambda k: ResolutionSpec.from_key(k))
        verdicts = [
            judge_box(s.id, Box(*s.bbox), level, ranges[level]).to_json_dict()
            for s in req.subjects
            for level in levels
        ]
        return {"verdicts": verdicts}

    @app.post("/anchors")
    def anchors(req: schemas.AnchorsRequest):
        ds = req.dataset.to_dataset()
        spec = (ResolutionSpec(req.spec.shorter, req.spec.max_side)
                if req.spec else ResolutionSpec(*cfg.anchors.spec))
        report = pipelines.run_anchors(
            ds, spec, cfg.anchors.to_anchor_config(improved=req.improved),
            thresholds=cfg.anchors.thresholds, jobs=req.jobs,
        )
        return report.to_json_dict()

    @app.post("/chips")
    def chips(req: schemas.ChipsRequest):
        ds = req.dataset.to_dataset()
        spec = (ResolutionSpec(req.spec.shorter, req.spec.max_side)
                if req.spec else ResolutionSpec(*cfg.chips.spec))
        rows, summary = pipelines.run_chips(
            ds, spec, cfg.chips.to_chip_config(req.seed), cfg.validity.to_snip_config(),
            cover=req.cover or cfg.chips.cover, seed=req.seed, jobs=req.jobs,
        )
        return {"images": rows, "summary": summary}

    @app.post("/fuse")
    def fuse(req: schemas.FuseRequest):
        ds = schemas.DatasetModel(images=req.images).to_dataset()
        specs = (
            tuple(ResolutionSpec(s.shorter, s.max_side) for s in req.specs)
            if req.specs else cfg.pyramid.to_specs()
        )
        per_level = {
            level: [d.to_detection() for d in dets] for level, dets in req.per_level.items()
        }
        fused = pipelines.run_fuse(ds, per_level, specs, cfg.validity.to_snip_config(),
                                   cfg.soft_nms.to_params())
        return {"detections": pipelines.detections_to_results(fused)}

    @app.post("/ensemble")
    def ensemble(req: schemas.EnsembleRequest):
        merged = ensemble_average([[d.to_detection() for d in model] for model in req.models])
        return {"detections": [schemas.DetectionModel.from_detection(d).model_dump(exclude_none=True)
                               for d in merged]}

    @app.post("/eval")
    def evaluate(req: schemas.EvalRequest):
        ds = req.dataset.to_dataset()
        dets = [d.to_detection() for d in req.detections]
        bins = cfg.eval.to_bins()
        if req.proposals:
            return pipelines.run_proposal_eval(ds, dets, req.budget or cfg.eval.proposal_budget, bins)
        return pipelines.run_eval(ds, dets, bins, max_dets=cfg.eval.max_dets)

    @app.post("/stats")
    def stats(req: schemas.StatsRequest):
        return pipelines.run_stats(req.dataset.to_dataset(), use_box_area=req.use_box_area)

    @app.post("/simulate")
    def simulate(req: schemas.SimulateRequest):
        population = None
        if req.dataset is not None:
            population = req.dataset.to_dataset()
        elif req.population_images is not None:
            population = PopulationConfig(images=req.population_images)
        rows = pipelines.run_simulate(cfg, population=population, seed=req.seed,
                                      protocol_names=req.protocols)
        return {"reports": rows}

    return app
