from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, TextIO

from facetrack.config import ConfigError, Settings
from facetrack.db.repository import Repository
from facetrack.services import correction
from facetrack.services.ablation import ConfigRun, Video, run_ablation, run_benchmark
from facetrack.services.fixtures import FIXTURE_ORDER, FIXTURES
from facetrack.services.ingest import (
    DetectionRecord,
    read_assignments,
    read_detections,
    read_ground_truth,
    write_assignments,
    write_detections,
    write_ground_truth,
)
from facetrack.services.metrics import MetricsReport, evaluate
from facetrack.services.reporting import (
    ReportSection,
    emit_crp,
    emit_report,
    format_table,
    plot_crp,
    write_crp_csv,
)
from facetrack.services.synth import ScenarioConfig, dump_scenario, generate, load_scenario, random_scenario
from facetrack.services.tracker import TrackerConfig, TrackerEngine

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1


@dataclass
class CommandContext:
    settings: Settings
    repo: Optional[Repository] = None
    stdout: TextIO = field(default_factory=lambda: sys.stdout)


def tracker_config(args: argparse.Namespace, settings: Settings) -> TrackerConfig:
    return TrackerConfig.from_settings(
        settings,
        iou_threshold=args.iou_thresh,
        fbtr_threshold=args.fbtr_thresh,
        t_max=args.tmax,
        predictor=args.predictor,
        fbtr_enabled=False if args.no_fbtr else None,
        cm_enabled=False if args.no_cm else None,
    )


def embedding_dim(args: argparse.Namespace, settings: Settings) -> Optional[int]:
    dim = args.embedding_dim if args.embedding_dim is not None else settings.embedding_dim
    if dim is not None and dim < 1:
        raise ConfigError(f"embedding dimension must be positive, got {dim}")
    return dim


def _observed_dim(records: list[DetectionRecord]) -> Optional[int]:
    return next((r.embedding.size for r in records if r.embedding is not None), None)


def _video_name(path: str, taken: set[str]) -> str:
    name = Path(path).name.split(".")[0] or "video"
    candidate, n = name, 2
    while candidate in taken:
        candidate, n = f"{name}-{n}", n + 1
    taken.add(candidate)
    return candidate


def _pairs(args: argparse.Namespace) -> list[tuple[str, str]]:
    pairs = [tuple(p) for p in (args.pair or [])]
    if args.first is not None:
        if args.second is None:
            raise ConfigError("positional inputs come in pairs")
        pairs.insert(0, (args.first, args.second))
    if not pairs:
        raise ConfigError("no inputs given")
    return pairs  # type: ignore[return-value]


def _write_manifest(path: Path, manifest: dict[str, Any]) -> None:
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ----------------------------------------------------------------------
# track
# ----------------------------------------------------------------------


async def cmd_track(args: argparse.Namespace, ctx: CommandContext) -> int:
    if args.from_manifest:
        manifest_text = Path(args.from_manifest).read_text(encoding="utf-8")
        try:
            manifest = json.loads(manifest_text)
            config = TrackerConfig(**manifest["config"])
            detections_path = manifest["inputs"]["detections"]
            dim = manifest["inputs"].get("embedding_dim")
            out_path = args.out or manifest["outputs"]["assignments"]
            events_path = args.events_out or manifest["outputs"].get("merge_events")
        except (json.JSONDecodeError, KeyError, TypeError, AttributeError) as exc:
            raise ConfigError(f"malformed manifest {args.from_manifest}: {exc}") from exc
    else:
        if not args.detections or not args.out:
            raise ConfigError("track needs a detections file and --out")
        config = tracker_config(args, ctx.settings)
        detections_path, out_path, events_path = args.detections, args.out, args.events_out
        dim = embedding_dim(args, ctx.settings)

    records = read_detections(detections_path, dim)
    result = TrackerEngine(config).run(records)

    with open(out_path, "wb") as fh:
        write_assignments(result.log, fh)
    if events_path:
        with open(events_path, "wb") as fh:
            correction.write_merge_events(result.merges, fh)

    manifest_path = Path(args.manifest_out or f"{out_path}.manifest.json")
    manifest = {
        "version": MANIFEST_VERSION,
        "command": "track",
        "inputs": {"detections": str(detections_path), "embedding_dim": dim or _observed_dim(records)},
        "config": config.as_dict(),
        "outputs": {"assignments": str(out_path), "merge_events": str(events_path) if events_path else None},
        "counts": {
            "frames": result.num_frames,
            "detections": result.num_detections,
            "tracks": len(result.log.track_ids()),
            "merges": len(result.merges),
        },
    }
    if not args.no_timing:
        manifest["timing"] = {
            "elapsed_sec": result.elapsed_sec,
            "fps": result.fps,
            "detections_per_sec": result.detections_per_sec,
        }
    _write_manifest(manifest_path, manifest)

    if ctx.repo is not None:
        await ctx.repo.record_run(
            "track",
            config.as_dict(),
            manifest["inputs"],
            frames=result.num_frames,
            detections=result.num_detections,
            fps=None if args.no_timing else result.fps,
        )
    logger.info(
        "track_finished out=%s tracks=%s merges=%s",
        out_path,
        len(result.log.track_ids()),
        len(result.merges),
    )
    return 0


# ----------------------------------------------------------------------
# evaluate
# ----------------------------------------------------------------------


def _manifest_fps(path: Optional[str]) -> Optional[float]:
    if not path:
        return None
    try:
        manifest = json.loads(Path(path).read_text(encoding="utf-8"))
        timing = manifest.get("timing") or {}
        return timing.get("fps")
    except (json.JSONDecodeError, AttributeError) as exc:
        raise ConfigError(f"malformed manifest {path}: {exc}") from exc


def _emit_sections(
    sections: list[ReportSection],
    args: argparse.Namespace,
    ctx: CommandContext,
    meta: dict[str, Any],
) -> None:
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            emit_report(sections, fh, args.report_format, meta)
        ctx.stdout.write(format_table(sections, with_timing=not args.no_timing))
    else:
        emit_report(sections, ctx.stdout, args.report_format, meta)


async def cmd_evaluate(args: argparse.Namespace, ctx: CommandContext) -> int:
    pairs = _pairs(args)
    manifests = list(args.manifest or [])
    events = list(args.events or [])
    gt_iou = args.gt_iou if args.gt_iou is not None else ctx.settings.gt_iou_threshold
    taken: set[str] = set()
    reports: dict[str, MetricsReport] = {}
    for i, (assign_path, gt_path) in enumerate(pairs):
        log = read_assignments(assign_path)
        gt = read_ground_truth(gt_path, args.gt_min_confidence)
        merges = correction.MergeSet.from_events(correction.read_merge_events(events[i])) if i < len(events) else None
        fps = None if args.no_timing else _manifest_fps(manifests[i] if i < len(manifests) else None)
        reports[_video_name(assign_path, taken)] = evaluate(
            gt, log, iou_threshold=gt_iou, merges=merges, fps=fps
        )
    section = ReportSection.build("evaluate", reports)
    _emit_sections([section], args, ctx, {"command": "evaluate", "gt_iou": gt_iou})

    if args.crp_prefix:
        emit_crp(section.aggregate, f"{args.crp_prefix}.csv", f"{args.crp_prefix}.svg")

    if ctx.repo is not None:
        run_id = await ctx.repo.record_run("evaluate", {"gt_iou": gt_iou}, {"pairs": [list(p) for p in pairs]})
        await ctx.repo.record_metrics(run_id, [section])
    return 0


# ----------------------------------------------------------------------
# ablate / benchmark
# ----------------------------------------------------------------------


def _load_videos(args: argparse.Namespace, ctx: CommandContext) -> list[Video]:
    taken: set[str] = set()
    videos = []
    for det_path, gt_path in _pairs(args):
        videos.append(
            Video(
                name=_video_name(det_path, taken),
                detections=read_detections(det_path, embedding_dim(args, ctx.settings)),
                gt=read_ground_truth(gt_path, args.gt_min_confidence),
            )
        )
    return videos


async def _record_runs(ctx: CommandContext, command: str, runs: list[ConfigRun], videos: list[Video]) -> None:
    if ctx.repo is None:
        return
    for run in runs:
        frames = sum(r.num_frames for r in run.results.values())
        dets = sum(r.num_detections for r in run.results.values())
        run_id = await ctx.repo.record_run(
            command,
            {"label": run.label, **run.config.as_dict()},
            {"videos": [v.name for v in videos]},
            frames=frames,
            detections=dets,
            fps=run.section.aggregate.fps,
        )
        await ctx.repo.record_metrics(run_id, [run.section])


async def cmd_ablate(args: argparse.Namespace, ctx: CommandContext) -> int:
    videos = _load_videos(args, ctx)
    base = tracker_config(args, ctx.settings)
    gt_iou = args.gt_iou if args.gt_iou is not None else ctx.settings.gt_iou_threshold
    runs = await run_ablation(videos, base, gt_iou, with_timing=not args.no_timing)
    sections = [run.section for run in runs]

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    suffix = "json" if args.report_format == "json" else "yaml"
    meta = {"command": "ablate", "base": base.as_dict(), "videos": [v.name for v in videos]}
    with open(out_dir / f"report.{suffix}", "w", encoding="utf-8") as fh:
        emit_report(sections, fh, args.report_format, meta)
    for run in runs:
        slug = run.label.replace("+", "_").lower()
        with open(out_dir / f"crp_{slug}.csv", "w", encoding="utf-8", newline="") as fh:
            write_crp_csv(run.section.aggregate, fh)
    plot_crp({run.label: run.section.aggregate for run in runs}, out_dir / "crp.svg", title="Ablation")

    ctx.stdout.write(format_table(sections, with_timing=not args.no_timing))
    await _record_runs(ctx, "ablate", runs, videos)
    return 0


async def cmd_benchmark(args: argparse.Namespace, ctx: CommandContext) -> int:
    videos = _load_videos(args, ctx)
    base = tracker_config(args, ctx.settings)
    gt_iou = args.gt_iou if args.gt_iou is not None else ctx.settings.gt_iou_threshold
    runs = await run_benchmark(videos, base, gt_iou, with_timing=not args.no_timing)
    sections = [run.section for run in runs]
    meta = {"command": "benchmark", "base": base.as_dict(), "videos": [v.name for v in videos]}
    if args.report:
        _emit_sections(sections, args, ctx, meta)
    else:
        ctx.stdout.write(format_table(sections, with_timing=not args.no_timing))
    await _record_runs(ctx, "benchmark", runs, videos)
    return 0


# ----------------------------------------------------------------------
# synth
# ----------------------------------------------------------------------


def _scenarios(args: argparse.Namespace) -> list[ScenarioConfig]:
    if args.fixture:
        names = FIXTURE_ORDER if args.fixture == "all" else [args.fixture]
        return [FIXTURES[name](args.seed or 0) for name in names]
    if args.random_seed is not None:
        return [random_scenario(args.random_seed)]
    if not args.scenario:
        raise ConfigError("synth needs a scenario file, --fixture or --random-seed")
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = ScenarioConfig.from_dict({**scenario.as_dict(), "seed": args.seed})
    return [scenario]


async def cmd_synth(args: argparse.Namespace, ctx: CommandContext) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for scenario in _scenarios(args):
        records, gt = generate(scenario)
        stem = scenario.name.lower()
        with open(out_dir / f"{stem}.detections.csv", "wb") as fh:
            write_detections(records, fh)
        with open(out_dir / f"{stem}.gt.csv", "wb") as fh:
            write_ground_truth(gt, fh)
        (out_dir / f"{stem}.scenario.yaml").write_text(dump_scenario(scenario), encoding="utf-8")
        ctx.stdout.write(f"{stem}: {len(records)} detections, {gt.num_dets} ground-truth entries\n")
    return 0


# ----------------------------------------------------------------------
# runs
# ----------------------------------------------------------------------


async def cmd_runs(args: argparse.Namespace, ctx: CommandContext) -> int:
    if ctx.repo is None:
        raise ConfigError("no results store configured; set DATABASE_URL or --db-url")
    for run in await ctx.repo.list_runs(args.limit):
        fps = "-" if run.fps is None else f"{run.fps:.1f}"
        label = run.config.get("label", "")
        ctx.stdout.write(f"{run.id}\t{run.created_at}\t{run.command}\t{label}\tfps={fps}\n")
    return 0
