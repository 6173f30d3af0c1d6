"""Ablation and predictor benchmark runs.

Every configuration tracks every video independently; runs are dispatched to
worker threads and gathered in a fixed order, so the output does not depend
on scheduling.
"""
from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass, replace
from typing import Mapping, Optional

from facetrack.config import PREDICTOR_KEYS
from facetrack.services.ingest import DetectionRecord, GroundTruth
from facetrack.services.metrics import DEFAULT_GT_IOU, MetricsReport, evaluate
from facetrack.services.reporting import ReportSection
from facetrack.services.tracker import TrackerConfig, TrackerEngine, TrackingResult

logger = logging.getLogger(__name__)

ABLATION_ORDER = ["DA", "DA+FBTR", "DA+TM", "DA+TM+FBTR", "DA+TM+FBTR+CM"]


@dataclass(frozen=True)
class Video:
    name: str
    detections: list[DetectionRecord]
    gt: GroundTruth


@dataclass
class ConfigRun:
    label: str
    config: TrackerConfig
    results: dict[str, TrackingResult]
    section: ReportSection


def ablation_configs(base: TrackerConfig) -> dict[str, TrackerConfig]:
    """The five ablation configurations derived from ``base``.

    Without the tracking module a tracklet only survives frames in which it
    is detected: last-box prediction and T_max = 0.
    """
    da = replace(base, predictor="hold", t_max=0, fbtr_enabled=False, cm_enabled=False)
    tm = replace(base, fbtr_enabled=False, cm_enabled=False)
    return {
        "DA": da,
        "DA+FBTR": replace(da, fbtr_enabled=True),
        "DA+TM": tm,
        "DA+TM+FBTR": replace(tm, fbtr_enabled=True),
        "DA+TM+FBTR+CM": replace(tm, fbtr_enabled=True, cm_enabled=True),
    }


def benchmark_configs(base: TrackerConfig) -> dict[str, TrackerConfig]:
    """DA+TM once per built-in motion predictor."""
    return {
        key: replace(base, predictor=key, fbtr_enabled=False, cm_enabled=False)
        for key in PREDICTOR_KEYS
    }


def _track_and_score(
    video: Video, config: TrackerConfig, gt_iou: float, with_timing: bool
) -> tuple[TrackingResult, MetricsReport]:
    result = TrackerEngine(config).run(video.detections)
    report = evaluate(
        video.gt,
        result.log,
        iou_threshold=gt_iou,
        fps=result.fps if with_timing else None,
    )
    return result, report


async def run_configs(
    configs: Mapping[str, TrackerConfig],
    videos: list[Video],
    gt_iou: float = DEFAULT_GT_IOU,
    with_timing: bool = True,
) -> list[ConfigRun]:
    jobs = [(label, video) for label in configs for video in videos]
    outputs = await asyncio.gather(
        *(
            asyncio.to_thread(_track_and_score, video, configs[label], gt_iou, with_timing)
            for label, video in jobs
        )
    )
    runs: list[ConfigRun] = []
    for label, config in configs.items():
        results: dict[str, TrackingResult] = {}
        reports: dict[str, MetricsReport] = {}
        for (job_label, video), (result, report) in zip(jobs, outputs):
            if job_label == label:
                results[video.name] = result
                reports[video.name] = report
        section = ReportSection.build(label, reports)
        runs.append(ConfigRun(label=label, config=config, results=results, section=section))
        logger.info(
            "configuration_scored label=%s videos=%s frag=%.5f idsw=%.5f crs=%.4f",
            label,
            len(videos),
            section.aggregate.frag,
            section.aggregate.idsw,
            section.aggregate.crs,
        )
    return runs


async def run_ablation(
    videos: list[Video],
    base: TrackerConfig,
    gt_iou: float = DEFAULT_GT_IOU,
    with_timing: bool = True,
) -> list[ConfigRun]:
    return await run_configs(ablation_configs(base), videos, gt_iou, with_timing)


async def run_benchmark(
    videos: list[Video],
    base: TrackerConfig,
    gt_iou: float = DEFAULT_GT_IOU,
    with_timing: bool = True,
) -> list[ConfigRun]:
    return await run_configs(benchmark_configs(base), videos, gt_iou, with_timing)


def find_run(runs: list[ConfigRun], label: str) -> Optional[ConfigRun]:
    return next((r for r in runs if r.label == label), None)
