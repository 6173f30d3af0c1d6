"""SQLAlchemy 2.0 ORM models for the results store."""
from __future__ import annotations

from datetime import datetime
from typing import Optional

from sqlalchemy import DateTime, Float, ForeignKey, Integer, String, Text, func
from sqlalchemy.orm import DeclarativeBase, Mapped, mapped_column, relationship


class Base(DeclarativeBase):
    pass


class Run(Base):
    __tablename__ = "runs"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)
    command: Mapped[str] = mapped_column(String(32), nullable=False)
    config_json: Mapped[str] = mapped_column(Text, nullable=False, default="{}")
    inputs_json: Mapped[str] = mapped_column(Text, nullable=False, default="{}")
    frames: Mapped[Optional[int]] = mapped_column(Integer)
    detections: Mapped[Optional[int]] = mapped_column(Integer)
    fps: Mapped[Optional[float]] = mapped_column(Float)
    created_at: Mapped[datetime] = mapped_column(
        DateTime(timezone=True), nullable=False, server_default=func.now()
    )

    metrics: Mapped[list[MetricRow]] = relationship(back_populates="run", cascade="all, delete-orphan")


class MetricRow(Base):
    __tablename__ = "metric_rows"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)
    run_id: Mapped[int] = mapped_column(ForeignKey("runs.id", ondelete="CASCADE"), nullable=False)
    configuration: Mapped[str] = mapped_column(String(64), nullable=False)
    video: Mapped[str] = mapped_column(String(255), nullable=False)
    num_dets: Mapped[int] = mapped_column(Integer, nullable=False)
    num_soft: Mapped[int] = mapped_column(Integer, nullable=False)
    num_hard: Mapped[int] = mapped_column(Integer, nullable=False)
    frag: Mapped[float] = mapped_column(Float, nullable=False)
    idsw: Mapped[float] = mapped_column(Float, nullable=False)
    crs: Mapped[float] = mapped_column(Float, nullable=False)
    fps: Mapped[Optional[float]] = mapped_column(Float)

    run: Mapped[Run] = relationship(back_populates="metrics")
