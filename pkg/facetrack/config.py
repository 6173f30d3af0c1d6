import os
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv

from facetrack import FaceTrackError

PREDICTOR_KEYS = ("hold", "cv")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


class ConfigError(FaceTrackError, ValueError):
    pass


@dataclass(frozen=True)
class Settings:
    iou_threshold: float = 0.25
    fbtr_threshold: float = 0.7
    t_max: int = 10
    predictor: str = "cv"
    cv_alpha: float = 0.5
    pool_cap: int = 64
    embedding_dim: Optional[int] = None  # None infers the dimension from the first embedding
    gt_iou_threshold: float = 0.5
    log_level: str = "INFO"
    database_url: str = ""  # empty disables the results store


def _env_float(name: str, default: str) -> float:
    raw = os.getenv(name, default).strip()
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{name} must be a number, got {raw!r}") from exc


def _env_int(name: str, default: str) -> int:
    raw = os.getenv(name, default).strip()
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{name} must be an integer, got {raw!r}") from exc


def _env_optional_int(name: str) -> Optional[int]:
    if not os.getenv(name, "").strip():
        return None
    return _env_int(name, "")


def load_settings() -> Settings:
    load_dotenv()

    iou_threshold = _env_float("FACETRACK_IOU_THRESHOLD", "0.25")
    fbtr_threshold = _env_float("FACETRACK_FBTR_THRESHOLD", "0.7")
    t_max = _env_int("FACETRACK_TMAX", "10")
    predictor = os.getenv("FACETRACK_PREDICTOR", "cv").strip().lower()
    cv_alpha = _env_float("FACETRACK_CV_ALPHA", "0.5")
    pool_cap = _env_int("FACETRACK_POOL_CAP", "64")
    embedding_dim = _env_optional_int("FACETRACK_EMBEDDING_DIM")
    gt_iou_threshold = _env_float("FACETRACK_GT_IOU", "0.5")
    log_level = os.getenv("FACETRACK_LOG_LEVEL", "INFO").strip().upper()
    database_url = os.getenv("DATABASE_URL", "").strip()

    if predictor not in PREDICTOR_KEYS:
        raise ConfigError(f"FACETRACK_PREDICTOR must be one of {PREDICTOR_KEYS}, got {predictor!r}")
    if log_level not in LOG_LEVELS:
        raise ConfigError(f"FACETRACK_LOG_LEVEL must be one of {LOG_LEVELS}, got {log_level!r}")
    if embedding_dim is not None and embedding_dim < 1:
        raise ConfigError("FACETRACK_EMBEDDING_DIM must be positive")
    if not 0.0 < gt_iou_threshold <= 1.0:
        raise ConfigError("FACETRACK_GT_IOU must be in (0, 1]")

    return Settings(
        iou_threshold=iou_threshold,
        fbtr_threshold=fbtr_threshold,
        t_max=t_max,
        predictor=predictor,
        cv_alpha=cv_alpha,
        pool_cap=pool_cap,
        embedding_dim=embedding_dim,
        gt_iou_threshold=gt_iou_threshold,
        log_level=log_level,
        database_url=database_url,
    )
