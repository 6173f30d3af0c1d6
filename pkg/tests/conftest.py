from __future__ import annotations

import io
from typing import Optional, Sequence

import numpy as np
import pytest

from facetrack.services.core_model import BBox, QualityAttrs
from facetrack.services.ingest import DetectionRecord, GroundTruth, GroundTruthEntry

ENROLLABLE = QualityAttrs(det_confidence=0.99, yaw=5.0, pitch=-3.0, roll=1.0, blur=0.95)
VERIFIABLE = QualityAttrs(det_confidence=0.9, yaw=40.0, pitch=10.0, roll=0.0, blur=0.8)
DISCARDED = QualityAttrs(det_confidence=0.6, yaw=80.0, pitch=0.0, roll=0.0, blur=0.4)


def det(
    frame: int,
    det_id: int,
    x: float,
    y: float,
    w: float = 60.0,
    h: float = 60.0,
    quality: QualityAttrs = ENROLLABLE,
    embedding: Optional[Sequence[float]] = None,
) -> DetectionRecord:
    return DetectionRecord(
        frame=frame,
        det_id=det_id,
        box=BBox(x, y, w, h),
        quality=quality,
        embedding=None if embedding is None else np.asarray(embedding, dtype=np.float64),
    )


def gt_of(rows: Sequence[tuple[int, str, float, float]], size: float = 60.0) -> GroundTruth:
    return GroundTruth(
        entries=[GroundTruthEntry(frame=f, identity=i, box=BBox(x, y, size, size)) for f, i, x, y in rows]
    )


def as_source(text: str) -> io.BytesIO:
    return io.BytesIO(text.encode("utf-8"))


def unit(dim: int, index: int) -> np.ndarray:
    vec = np.zeros(dim)
    vec[index] = 1.0
    return vec


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch: pytest.MonkeyPatch) -> None:
    for key in (
        "FACETRACK_IOU_THRESHOLD",
        "FACETRACK_FBTR_THRESHOLD",
        "FACETRACK_TMAX",
        "FACETRACK_PREDICTOR",
        "FACETRACK_CV_ALPHA",
        "FACETRACK_POOL_CAP",
        "FACETRACK_EMBEDDING_DIM",
        "FACETRACK_GT_IOU",
        "FACETRACK_LOG_LEVEL",
        "DATABASE_URL",
    ):
        monkeypatch.delenv(key, raising=False)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
