"""Geometry and embedding primitives shared by every stage of the pipeline."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from facetrack import FaceTrackError

NORM_EPS = 1e-12


class EmbeddingError(FaceTrackError):
    pass


class InvalidValueError(FaceTrackError, ValueError):
    pass


@dataclass(frozen=True)
class BBox:
    """Face box as (left, top, width, height) in continuous pixel coordinates."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "w", "h"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidValueError(f"box field {name} is not finite")
        if self.w <= 0 or self.h <= 0:
            raise InvalidValueError(f"box must have positive size, got w={self.w} h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return self.x + self.w / 2.0, self.y + self.h / 2.0

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> BBox:
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return self.x, self.y, self.w, self.h


@dataclass(frozen=True)
class QualityAttrs:
    det_confidence: float
    yaw: float
    pitch: float
    roll: float
    blur: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.det_confidence <= 1.0:
            raise InvalidValueError(f"det_confidence out of [0,1]: {self.det_confidence}")
        if not 0.0 <= self.blur <= 1.0:
            raise InvalidValueError(f"blur out of [0,1]: {self.blur}")
        for name in ("yaw", "pitch", "roll"):
            value = getattr(self, name)
            if not -180.0 <= value <= 180.0:
                raise InvalidValueError(f"{name} out of [-180,180]: {value}")

    @property
    def max_abs_angle(self) -> float:
        return max(abs(self.yaw), abs(self.pitch), abs(self.roll))


def iou(a: BBox, b: BBox) -> float:
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def iou_matrix(rows: Sequence[BBox], cols: Sequence[BBox]) -> np.ndarray:
    """Pairwise IOU, shape (len(rows), len(cols))."""
    if not rows or not cols:
        return np.zeros((len(rows), len(cols)), dtype=np.float64)
    a = np.array([r.as_tuple() for r in rows], dtype=np.float64)
    b = np.array([c.as_tuple() for c in cols], dtype=np.float64)
    ax2 = (a[:, 0] + a[:, 2])[:, None]
    ay2 = (a[:, 1] + a[:, 3])[:, None]
    bx2 = (b[:, 0] + b[:, 2])[None, :]
    by2 = (b[:, 1] + b[:, 3])[None, :]
    iw = np.clip(np.minimum(ax2, bx2) - np.maximum(a[:, 0:1], b[None, :, 0]), 0.0, None)
    ih = np.clip(np.minimum(ay2, by2) - np.maximum(a[:, 1:2], b[None, :, 1]), 0.0, None)
    inter = iw * ih
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    return np.clip(inter / union, 0.0, 1.0)


def as_embedding(values: Sequence[float] | np.ndarray, dim: int | None = None) -> np.ndarray:
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise EmbeddingError(f"embedding must be a non-empty vector, got shape {vec.shape}")
    if dim is not None and vec.size != dim:
        raise EmbeddingError(f"embedding dimension {vec.size} != configured {dim}")
    if not np.all(np.isfinite(vec)):
        raise EmbeddingError("embedding contains non-finite values")
    return vec


def normalize(vec: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm < NORM_EPS:
        raise EmbeddingError("degenerate embedding: zero norm")
    return vec / norm


def mean_embedding(templates: Sequence[np.ndarray]) -> np.ndarray:
    if len(templates) == 0:
        raise EmbeddingError("no templates")
    dims = {t.shape for t in templates}
    if len(dims) != 1:
        raise EmbeddingError(f"template dimension mismatch: {sorted(dims)}")
    return normalize(np.mean(np.stack(templates), axis=0))


def similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity of the L2-normalised inputs."""
    if u.shape != v.shape:
        raise EmbeddingError(f"similarity dimension mismatch: {u.shape} vs {v.shape}")
    score = float(np.dot(normalize(u), normalize(v)))
    return min(1.0, max(-1.0, score))
