"""
Repository for the results store: recorded runs and their per-video metric rows.
Configuration and inputs are stored as JSON text so that any dialect can hold them.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Optional, Sequence

from sqlalchemy import select

from facetrack.db.models import Base, MetricRow as MetricRowModel, Run as RunModel
from facetrack.db.session import close_db, get_engine, get_session, init_db
from facetrack.services.reporting import ReportSection

AGGREGATE_VIDEO = "(all)"


@dataclass
class RunData:
    id: int
    command: str
    config: dict[str, Any]
    inputs: dict[str, Any]
    frames: Optional[int]
    detections: Optional[int]
    fps: Optional[float]
    created_at: str


@dataclass
class MetricRowData:
    configuration: str
    video: str  # AGGREGATE_VIDEO for the whole-dataset row
    num_dets: int
    num_soft: int
    num_hard: int
    frag: float
    idsw: float
    crs: float
    fps: Optional[float] = None


class Repository:
    @classmethod
    async def create(cls, dsn: str) -> "Repository":
        await init_db(dsn)
        repo = cls()
        await repo._migrate()
        return repo

    async def _migrate(self) -> None:
        async with get_engine().begin() as conn:
            await conn.run_sync(Base.metadata.create_all)

    # ------------------------------------------------------------------
    # Runs
    # ------------------------------------------------------------------

    async def record_run(
        self,
        command: str,
        config: dict[str, Any],
        inputs: dict[str, Any],
        frames: Optional[int] = None,
        detections: Optional[int] = None,
        fps: Optional[float] = None,
    ) -> int:
        async with get_session() as session:
            run = RunModel(
                command=command,
                config_json=json.dumps(config, sort_keys=True),
                inputs_json=json.dumps(inputs, sort_keys=True),
                frames=frames,
                detections=detections,
                fps=fps,
            )
            session.add(run)
            await session.commit()
            return run.id

    async def list_runs(self, limit: int = 20) -> list[RunData]:
        async with get_session() as session:
            result = await session.execute(
                select(RunModel).order_by(RunModel.id.desc()).limit(limit)
            )
            rows = result.scalars().all()
        return [
            RunData(
                id=r.id,
                command=r.command,
                config=json.loads(r.config_json or "{}"),
                inputs=json.loads(r.inputs_json or "{}"),
                frames=r.frames,
                detections=r.detections,
                fps=r.fps,
                created_at=str(r.created_at),
            )
            for r in rows
        ]

    # ------------------------------------------------------------------
    # Metrics
    # ------------------------------------------------------------------

    async def record_metrics(self, run_id: int, sections: Sequence[ReportSection]) -> int:
        rows: list[MetricRowModel] = []
        for section in sections:
            reports = [*section.videos.items(), (AGGREGATE_VIDEO, section.aggregate)]
            for video, report in reports:
                rows.append(
                    MetricRowModel(
                        run_id=run_id,
                        configuration=section.label,
                        video=video,
                        num_dets=report.num_dets,
                        num_soft=report.num_soft,
                        num_hard=report.num_hard,
                        frag=report.frag,
                        idsw=report.idsw,
                        crs=report.crs,
                        fps=report.fps,
                    )
                )
        async with get_session() as session:
            session.add_all(rows)
            await session.commit()
        return len(rows)

    async def list_metrics(self, run_id: int) -> list[MetricRowData]:
        async with get_session() as session:
            result = await session.execute(
                select(MetricRowModel).where(MetricRowModel.run_id == run_id).order_by(MetricRowModel.id)
            )
            rows = result.scalars().all()
        return [
            MetricRowData(
                configuration=r.configuration,
                video=r.video,
                num_dets=r.num_dets,
                num_soft=r.num_soft,
                num_hard=r.num_hard,
                frag=r.frag,
                idsw=r.idsw,
                crs=r.crs,
                fps=r.fps,
            )
            for r in rows
        ]

    # ------------------------------------------------------------------
    # Lifecycle
    # ------------------------------------------------------------------

    async def close(self) -> None:
        await close_db()
