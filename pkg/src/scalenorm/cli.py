"""Command-line front end: a thin client over the pipeline handlers.

Exit codes: 0 success, 1 usage or configuration error, 2 data-integrity
error. All commands are read-only with respect to their inputs, and every
seeded command is byte-reproducible for any --jobs setting.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .coco import load_dataset, load_results
from .configfile import ToolkitConfig
from .errors import ConfigurationError, DatasetError, ScaleNormError
from .geometry import ImageSize
from .pyramid import ResolutionSpec
from . import pipelines

logger = logging.getLogger("scalenorm")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise SystemExit(self._fail(message))

    @staticmethod
    def _fail(message) -> int:
        print(f"error: {message}", file=sys.stderr)
        return 1


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def _write(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(out).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


def _jsonl(rows) -> str:
    return "\n".join(_dumps(r) for r in rows)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="scalenorm", description=__doc__.splitlines()[0])
    p.add_argument("--verbose", action="store_true", help="debug logging, including per-subject verdicts")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, detections=False, seed=False, jobs=False, fmt=None):
        sp.add_argument("--config", help="sectioned JSON config file")
        sp.add_argument("--out", help="output path (default: stdout)")
        if detections:
            sp.add_argument("--detections", nargs="+", required=True, help="COCO results file(s)")
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        if jobs:
            sp.add_argument("--jobs", type=int, default=1)
        if fmt:
            sp.add_argument("--format", choices=("json", "csv", "table"), default=fmt)

    sp = sub.add_parser("stats", help="relative-scale distribution of a dataset")
    sp.add_argument("--annotations", required=True)
    sp.add_argument("--use-box-area", action="store_true", help="use w*h instead of the area field")
    sp.add_argument("--histogram-csv", metavar="PATH",
                    help="also write the histogram as CSV (bin_low, bin_high, fraction)")
    common(sp, fmt="json")

    sp = sub.add_parser("plan", help="pyramid rescale plan for an image or a dataset")
    sp.add_argument("--annotations", help="plan every image of a dataset (JSON Lines)")
    sp.add_argument("--width", type=int)
    sp.add_argument("--height", type=int)
    common(sp)

    sp = sub.add_parser("anchors", help="ground-truth / anchor matching statistics")
    sp.add_argument("--annotations", required=True)
    sp.add_argument("--improved", action="store_true", help="use the widened anchor scale set")
    common(sp, jobs=True, fmt="json")

    sp = sub.add_parser("chips", help="greedy chip cover per image (JSON Lines + summary)")
    sp.add_argument("--annotations", required=True)
    sp.add_argument("--cover-all", action="store_true", help="cover every object, not just level-valid ones")
    common(sp, seed=True, jobs=True)

    sp = sub.add_parser("filter", help="validity verdicts per (annotation, level) as JSON Lines")
    sp.add_argument("--annotations", required=True)
    sp.add_argument("--branch", choices=("rcn", "rpn"), default="rcn")
    common(sp)

    sp = sub.add_parser("fuse", help="rescale, range-filter and soft-NMS per-level detections")
    sp.add_argument("--annotations", required=True, help="supplies image sizes")
    sp.add_argument("--levels", nargs="+", help="level keys matching --detections order "
                                                "(default: configured pyramid, ascending)")
    common(sp, detections=True)

    sp = sub.add_parser("eval", help="COCO-protocol AP (or proposal recall) report")
    sp.add_argument("--annotations", required=True)
    sp.add_argument("--proposals", action="store_true", help="evaluate class-agnostic proposal recall")
    sp.add_argument("--budget", type=int, help="per-image proposal budget (default from config)")
    common(sp, detections=True, fmt="table")

    sp = sub.add_parser("simulate", help="compare training protocols on the synthetic oracle")
    sp.add_argument("--annotations", help="population from a dataset (default: synthetic)")
    sp.add_argument("--protocols", nargs="+", help="subset of protocols to run")
    common(sp, seed=True, fmt="table")

    sp = sub.add_parser("serve", help="run the HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8000)

    return p


def _load_many_results(paths):
    return [load_results(p) for p in paths]


def run(args: argparse.Namespace) -> int:
    cfg = ToolkitConfig.load(getattr(args, "config", None))
    cmd = args.command

    if cmd == "stats":
        ds = load_dataset(args.annotations)
        stats = pipelines.run_stats(ds, use_box_area=args.use_box_area)
        if args.histogram_csv:
            Path(args.histogram_csv).write_text(pipelines.stats_histogram_csv(stats),
                                                encoding="utf-8")
        if args.format == "csv":
            _write(pipelines.stats_histogram_csv(stats), args.out)
        elif args.format == "table":
            q = stats["quantiles"]
            _write("\n".join(f"p{k}: {v:.4f}" for k, v in sorted(q.items(), key=lambda kv: int(kv[0]))), args.out)
        else:
            _write(_dumps(stats), args.out)
        return 0

    if cmd == "plan":
        specs = cfg.pyramid.to_specs()
        if args.annotations:
            ds = load_dataset(args.annotations)
            _write(_jsonl(pipelines.run_plan_dataset(ds, specs)), args.out)
        elif args.width and args.height:
            _write(_dumps(pipelines.run_plan(ImageSize(args.width, args.height), specs)), args.out)
        else:
            raise ConfigurationError("plan needs --annotations or both --width and --height")
        return 0

    if cmd == "anchors":
        ds = load_dataset(args.annotations)
        spec = ResolutionSpec(*cfg.anchors.spec)
        report = pipelines.run_anchors(
            ds, spec, cfg.anchors.to_anchor_config(improved=args.improved),
            thresholds=cfg.anchors.thresholds, jobs=args.jobs,
        )
        _write(_dumps(report.to_json_dict()), args.out)
        return 0

    if cmd == "chips":
        ds = load_dataset(args.annotations)
        spec = ResolutionSpec(*cfg.chips.spec)
        cover = "all" if args.cover_all else cfg.chips.cover
        rows, summary = pipelines.run_chips(
            ds, spec, cfg.chips.to_chip_config(args.seed), cfg.validity.to_snip_config(),
            cover=cover, seed=args.seed, jobs=args.jobs,
        )
        _write(_jsonl(rows + [{"summary": summary}]), args.out)
        return 0

    if cmd == "filter":
        ds = load_dataset(args.annotations)
        rows = pipelines.run_filter(ds, cfg.validity.to_snip_config(), branch=args.branch)
        if getattr(args, "verbose", False):
            for r in rows:
                logger.debug("verdict %s", r)
        _write(_jsonl(rows), args.out)
        return 0

    if cmd == "fuse":
        ds = load_dataset(args.annotations)
        specs = cfg.pyramid.to_specs()
        levels = args.levels or [s.key for s in specs]
        if len(levels) != len(args.detections):
            raise ConfigurationError(
                f"{len(args.detections)} detection file(s) but {len(levels)} level key(s)")
        per_level = {
            level: dets for level, dets in zip(levels, _load_many_results(args.detections))
        }
        fused = pipelines.run_fuse(ds, per_level, specs, cfg.validity.to_snip_config(),
                                   cfg.soft_nms.to_params())
        _write(_dumps(pipelines.detections_to_results(fused)), args.out)
        return 0

    if cmd == "eval":
        ds = load_dataset(args.annotations)
        dets = [d for path in args.detections for d in load_results(path)]
        bins = cfg.eval.to_bins()
        if args.proposals:
            budget = args.budget or cfg.eval.proposal_budget
            report = pipelines.run_proposal_eval(ds, dets, budget, bins)
            table = pipelines.recall_table(report)
        else:
            report = pipelines.run_eval(ds, dets, bins, max_dets=cfg.eval.max_dets)
            table = pipelines.eval_table(report)
        if args.format == "json":
            _write(_dumps(report), args.out)
        else:
            _write(table + "\n" + _dumps(report), args.out)
        return 0

    if cmd == "simulate":
        population = load_dataset(args.annotations) if args.annotations else None
        rows = pipelines.run_simulate(cfg, population=population, seed=args.seed,
                                      protocol_names=args.protocols)
        if args.format == "json":
            _write(_dumps(rows), args.out)
        else:
            _write(pipelines.simulate_table(rows), args.out)
        return 0

    if cmd == "serve":
        import uvicorn

        from .service import create_app

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return 0

    raise ConfigurationError(f"unknown command {cmd!r}")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse help/usage paths
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (ConfigurationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DatasetError, ScaleNormError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
