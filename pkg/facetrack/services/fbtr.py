"""Face-based tracklet reconnection.

Detections are sorted by face quality into enrollable, verifiable and
discarded faces. Each tracklet keeps bounded pools of enrollable and
verifiable templates. A tracklet holding a detection in the current frame
is identified with an earlier tracklet when the cosine similarity between
its mean verifiable template and that tracklet's mean enrollable template
reaches the reconnection threshold.
"""
from __future__ import annotations

import enum
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from facetrack.config import ConfigError
from facetrack.services.core_model import QualityAttrs, mean_embedding, normalize

if TYPE_CHECKING:
    from facetrack.services.ingest import DetectionRecord
    from facetrack.services.tracker import Tracklet

logger = logging.getLogger(__name__)

DEFAULT_POOL_CAP = 64


class QualityClass(enum.Enum):
    ENROLLABLE = "enrollable"
    VERIFIABLE = "verifiable"
    DISCARDED = "discarded"


@dataclass(frozen=True)
class QualityGate:
    min_confidence: float
    max_abs_angle: float
    min_blur: float
    strict_blur: bool = True

    def passes(self, quality: QualityAttrs) -> bool:
        blur_ok = quality.blur > self.min_blur if self.strict_blur else quality.blur >= self.min_blur
        return (
            quality.det_confidence > self.min_confidence
            and quality.max_abs_angle <= self.max_abs_angle
            and blur_ok
        )


@dataclass(frozen=True)
class QualityGates:
    enroll: QualityGate = QualityGate(min_confidence=0.95, max_abs_angle=25.0, min_blur=0.9)
    # Verifiable blur is open-ended above 0.75 so that enrollable faces stay a subset.
    verify: QualityGate = QualityGate(min_confidence=0.8, max_abs_angle=60.0, min_blur=0.75, strict_blur=False)

    def __post_init__(self) -> None:
        if (
            self.enroll.min_confidence < self.verify.min_confidence
            or self.enroll.max_abs_angle > self.verify.max_abs_angle
            or self.enroll.min_blur < self.verify.min_blur
        ):
            raise ConfigError("enroll gates must be at least as strict as verify gates")


def classify(quality: QualityAttrs, gates: QualityGates) -> QualityClass:
    if gates.enroll.passes(quality):
        return QualityClass.ENROLLABLE
    if gates.verify.passes(quality):
        return QualityClass.VERIFIABLE
    return QualityClass.DISCARDED


@dataclass
class TemplatePool:
    """Templates of one tracklet in arrival order, oldest evicted first.

    Each entry carries an enrollable flag; the enrollable pool is the flagged
    subset of the verifiable pool, so evicting a template removes it from both.
    """

    cap: int = DEFAULT_POOL_CAP
    _entries: deque[tuple[np.ndarray, bool]] = field(default_factory=deque, repr=False)
    _enroll_mean: Optional[np.ndarray] = field(default=None, repr=False)
    _verify_mean: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.cap < 1:
            raise ConfigError("pool cap must be >= 1")
        self._entries = deque(self._entries, maxlen=self.cap)

    @property
    def enrollables(self) -> list[np.ndarray]:
        return [template for template, enrollable in self._entries if enrollable]

    @property
    def verifiables(self) -> list[np.ndarray]:
        return [template for template, _ in self._entries]

    def add(self, template: np.ndarray, quality_class: QualityClass) -> None:
        if quality_class is QualityClass.DISCARDED:
            return
        self._entries.append((normalize(template), quality_class is QualityClass.ENROLLABLE))
        self._enroll_mean = None
        self._verify_mean = None

    def absorb(self, other: TemplatePool) -> None:
        """Append another (newer) pool's templates after this pool's own."""
        self._entries.extend(other._entries)
        self._enroll_mean = None
        self._verify_mean = None

    @property
    def enroll_mean(self) -> Optional[np.ndarray]:
        if self._enroll_mean is None:
            enrollables = self.enrollables
            if enrollables:
                self._enroll_mean = mean_embedding(enrollables)
        return self._enroll_mean

    @property
    def verify_mean(self) -> Optional[np.ndarray]:
        if self._verify_mean is None and self._entries:
            self._verify_mean = mean_embedding(self.verifiables)
        return self._verify_mean


def ingest_template(tracklet: Tracklet, record: DetectionRecord, gates: QualityGates) -> QualityClass:
    """Store the record's embedding in the tracklet's pools according to its quality.

    Records without an embedding count as discarded faces.
    """
    if record.embedding is None:
        return QualityClass.DISCARDED
    quality_class = classify(record.quality, gates)
    tracklet.pool.add(record.embedding, quality_class)
    return quality_class


@dataclass(frozen=True)
class ReconnectMatch:
    absorbed: Tracklet
    surviving: Tracklet
    score: float


def reconnect(
    tracklet: Tracklet,
    candidates: Sequence[Tracklet],
    threshold: float,
) -> Optional[ReconnectMatch]:
    """Pick the candidate whose mean enrollable template best matches the
    tracklet's mean verifiable template, if that score reaches ``threshold``.

    Candidates without enrollable templates are skipped; equal scores go to
    the lower (older) track ID.
    """
    query = tracklet.pool.verify_mean
    if query is None:
        return None
    eligible = sorted(
        (c for c in candidates if c.track_id != tracklet.track_id and c.pool.enroll_mean is not None),
        key=lambda c: c.track_id,
    )
    if not eligible:
        return None
    references = np.stack([c.pool.enroll_mean for c in eligible])
    scores = references @ query
    best = int(np.argmax(scores))
    score = float(scores[best])
    if score < threshold:
        logger.debug(
            "fbtr_no_match track_id=%s best_candidate=%s score=%.4f",
            tracklet.track_id,
            eligible[best].track_id,
            score,
        )
        return None
    return ReconnectMatch(absorbed=tracklet, surviving=eligible[best], score=score)
