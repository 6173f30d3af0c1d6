from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol

from facetrack import FaceTrackError
from facetrack.config import PREDICTOR_KEYS, ConfigError, Settings
from facetrack.services import correction
from facetrack.services.association import AssociationResult, associate
from facetrack.services.core_model import BBox
from facetrack.services.correction import MergeEvent, MergeSet
from facetrack.services.fbtr import (
    DEFAULT_POOL_CAP,
    QualityClass,
    QualityGates,
    TemplatePool,
    ingest_template,
    reconnect,
)
from facetrack.services.ingest import Assignment, AssignmentLog, DetectionRecord, OrderingError, group_frames

logger = logging.getLogger(__name__)


class LifecycleError(FaceTrackError):
    pass


class TrackState(enum.Enum):
    ACTIVE = "active"
    LOST = "lost"
    DEAD = "dead"


# ----------------------------------------------------------------------
# Predictors
# ----------------------------------------------------------------------


class Predictor(Protocol):
    def observe(self, frame: int, box: BBox) -> None: ...

    def predict(self, frame: int) -> BBox: ...


class HoldLastPredictor:
    def __init__(self, frame: int, box: BBox) -> None:
        self.box = box

    def observe(self, frame: int, box: BBox) -> None:
        self.box = box

    def predict(self, frame: int) -> BBox:
        return self.box


class ConstantVelocityPredictor:
    """Extrapolates the box centre with an exponentially smoothed velocity.

    Width and height are held at their last observed values.
    """

    def __init__(self, frame: int, box: BBox, alpha: float = 0.5) -> None:
        self.alpha = alpha
        self.box = box
        self.frame = frame
        self.velocity: Optional[tuple[float, float]] = None

    def observe(self, frame: int, box: BBox) -> None:
        dt = frame - self.frame
        if dt > 0:
            (cx0, cy0), (cx1, cy1) = self.box.center, box.center
            inst = ((cx1 - cx0) / dt, (cy1 - cy0) / dt)
            if self.velocity is None:
                self.velocity = inst
            else:
                a = self.alpha
                self.velocity = (a * inst[0] + (1 - a) * self.velocity[0], a * inst[1] + (1 - a) * self.velocity[1])
        self.box = box
        self.frame = frame

    def predict(self, frame: int) -> BBox:
        if self.velocity is None:
            return self.box
        dt = frame - self.frame
        cx, cy = self.box.center
        return BBox.from_center(cx + self.velocity[0] * dt, cy + self.velocity[1] * dt, self.box.w, self.box.h)


def make_predictor(kind: str, frame: int, box: BBox, alpha: float) -> Predictor:
    if kind == "hold":
        return HoldLastPredictor(frame, box)
    if kind == "cv":
        return ConstantVelocityPredictor(frame, box, alpha)
    raise ConfigError(f"unknown predictor {kind!r}")


# ----------------------------------------------------------------------
# Tracklets and configuration
# ----------------------------------------------------------------------


@dataclass
class Tracklet:
    track_id: int
    birth_frame: int
    last_box: BBox
    motion: Predictor
    pool: TemplatePool
    state: TrackState = TrackState.ACTIVE
    frames_since_update: int = 0
    detections: list[tuple[int, int]] = field(default_factory=list)
    absorbed_into: Optional[int] = None

    @property
    def first_frame(self) -> int:
        return self.detections[0][0]

    @property
    def last_frame(self) -> int:
        return self.detections[-1][0]

    def update(self, frame: int, record: DetectionRecord) -> None:
        if self.state is TrackState.DEAD:
            raise LifecycleError(f"tracklet {self.track_id} is dead")
        self.last_box = record.box
        self.motion.observe(frame, record.box)
        self.frames_since_update = 0
        self.state = TrackState.ACTIVE
        self.detections.append((frame, record.det_id))


def predict(tracklet: Tracklet, frame: int) -> BBox:
    if tracklet.state is TrackState.DEAD:
        raise LifecycleError(f"cannot predict dead tracklet {tracklet.track_id}")
    return tracklet.motion.predict(frame)


@dataclass(frozen=True)
class TrackerConfig:
    iou_threshold: float = 0.25
    t_max: int = 10
    predictor: str = "cv"
    cv_alpha: float = 0.5
    fbtr_enabled: bool = True
    cm_enabled: bool = True
    fbtr_threshold: float = 0.7
    gates: QualityGates = QualityGates()
    pool_cap: int = DEFAULT_POOL_CAP

    def __post_init__(self) -> None:
        if not 0.0 <= self.iou_threshold < 1.0:
            raise ConfigError(f"iou_threshold must be in [0, 1), got {self.iou_threshold}")
        if not -1.0 <= self.fbtr_threshold <= 1.0:
            raise ConfigError(f"fbtr_threshold must be in [-1, 1], got {self.fbtr_threshold}")
        # 0 is allowed: it is the detection-only association baseline.
        if self.t_max < 0:
            raise ConfigError(f"t_max must be >= 0, got {self.t_max}")
        if self.predictor not in PREDICTOR_KEYS:
            raise ConfigError(f"predictor must be one of {PREDICTOR_KEYS}, got {self.predictor!r}")
        if not 0.0 < self.cv_alpha <= 1.0:
            raise ConfigError(f"cv_alpha must be in (0, 1], got {self.cv_alpha}")
        if self.pool_cap < 1:
            raise ConfigError(f"pool_cap must be >= 1, got {self.pool_cap}")

    @classmethod
    def from_settings(cls, settings: Settings, **overrides: object) -> TrackerConfig:
        values: dict[str, object] = dict(
            iou_threshold=settings.iou_threshold,
            t_max=settings.t_max,
            predictor=settings.predictor,
            cv_alpha=settings.cv_alpha,
            fbtr_threshold=settings.fbtr_threshold,
            pool_cap=settings.pool_cap,
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)  # type: ignore[arg-type]

    def as_dict(self) -> dict[str, object]:
        return {
            "iou_threshold": self.iou_threshold,
            "t_max": self.t_max,
            "predictor": self.predictor,
            "cv_alpha": self.cv_alpha,
            "fbtr_enabled": self.fbtr_enabled,
            "cm_enabled": self.cm_enabled,
            "fbtr_threshold": self.fbtr_threshold,
            "pool_cap": self.pool_cap,
        }


# ----------------------------------------------------------------------
# Engine
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class TrackEvent:
    kind: str  # spawned | died | merged
    frame: int
    track_id: int
    other_id: Optional[int] = None


@dataclass
class StepOutput:
    frame: int
    entries: list[Assignment]
    events: list[TrackEvent]
    merges: list[MergeEvent]


@dataclass
class TrackingResult:
    log: AssignmentLog
    merges: list[MergeEvent]
    merge_set: MergeSet
    num_frames: int
    num_detections: int
    elapsed_sec: float

    @property
    def fps(self) -> float:
        return self.num_frames / self.elapsed_sec if self.elapsed_sec > 0 else 0.0

    @property
    def detections_per_sec(self) -> float:
        return self.num_detections / self.elapsed_sec if self.elapsed_sec > 0 else 0.0


class TrackerEngine:
    """Online tracker: one instance per stream, mutated by one thread at a time."""

    def __init__(self, config: TrackerConfig) -> None:
        self.config = config
        self.tracklets: dict[int, Tracklet] = {}
        self.merge_set = MergeSet()
        # non-absorbed tracklets that have held an enrollable template, by ID
        self._references: dict[int, Tracklet] = {}
        self._live: dict[int, Tracklet] = {}
        self._next_id = 1
        self._last_frame: Optional[int] = None

    def live_tracklets(self) -> list[Tracklet]:
        return list(self._live.values())

    @property
    def reference_ids(self) -> list[int]:
        """IDs of the tracklets reconnection may still merge into."""
        return sorted(self._references)

    def _spawn(self, frame: int, record: DetectionRecord) -> Tracklet:
        cfg = self.config
        tracklet = Tracklet(
            track_id=self._next_id,
            birth_frame=frame,
            last_box=record.box,
            motion=make_predictor(cfg.predictor, frame, record.box, cfg.cv_alpha),
            pool=TemplatePool(cap=cfg.pool_cap),
            detections=[(frame, record.det_id)],
        )
        self.tracklets[tracklet.track_id] = tracklet
        self._live[tracklet.track_id] = tracklet
        self._next_id += 1
        logger.debug("tracklet_spawned track_id=%s frame=%s", tracklet.track_id, frame)
        return tracklet

    def _absorb(self, absorbed: Tracklet, surviving: Tracklet) -> None:
        surviving.last_box = absorbed.last_box
        surviving.motion = absorbed.motion
        surviving.frames_since_update = absorbed.frames_since_update
        surviving.state = TrackState.ACTIVE
        self._live[surviving.track_id] = surviving
        surviving.detections.extend(absorbed.detections)
        surviving.pool.absorb(absorbed.pool)
        absorbed.state = TrackState.DEAD
        self._live.pop(absorbed.track_id, None)
        absorbed.absorbed_into = surviving.track_id
        absorbed.detections = []
        self._references.pop(absorbed.track_id, None)
        self.merge_set.record_merge(absorbed.track_id, surviving.track_id)

    def step(self, frame: int, detections: list[DetectionRecord]) -> StepOutput:
        if self._last_frame is not None and frame <= self._last_frame:
            raise OrderingError(f"frame {frame} presented after frame {self._last_frame}")
        self._last_frame = frame
        cfg = self.config
        events: list[TrackEvent] = []
        merges: list[MergeEvent] = []

        live = sorted(self.live_tracklets(), key=lambda t: t.track_id)
        predictions = [predict(t, frame) for t in live]
        result: AssociationResult = associate(predictions, [d.box for d in detections], cfg.iou_threshold)

        holder: dict[int, Tracklet] = {}
        for row, col in result.matches:
            live[row].update(frame, detections[col])
            holder[col] = live[row]
        for col in result.unmatched_detections:
            holder[col] = self._spawn(frame, detections[col])
            events.append(TrackEvent("spawned", frame, holder[col].track_id))
        for row in result.unmatched_tracklets:
            tracklet = live[row]
            tracklet.frames_since_update += 1
            if tracklet.frames_since_update > cfg.t_max:
                tracklet.state = TrackState.DEAD
                del self._live[tracklet.track_id]
                events.append(TrackEvent("died", frame, tracklet.track_id))
                logger.debug("tracklet_died track_id=%s frame=%s", tracklet.track_id, frame)
            else:
                tracklet.state = TrackState.LOST

        if cfg.fbtr_enabled and holder:
            merges = self._reconnect(frame, detections, holder)
            events.extend(TrackEvent("merged", m.frame, m.absorbed_id, m.surviving_id) for m in merges)

        entries = [
            Assignment(frame=frame, det_id=d.det_id, box=d.box, track_id=holder[col].track_id)
            for col, d in enumerate(detections)
        ]
        return StepOutput(frame=frame, entries=entries, events=events, merges=merges)

    def _reconnect(
        self,
        frame: int,
        detections: list[DetectionRecord],
        holder: dict[int, Tracklet],
    ) -> list[MergeEvent]:
        cfg = self.config
        for col, tracklet in holder.items():
            if ingest_template(tracklet, detections[col], cfg.gates) is QualityClass.ENROLLABLE:
                self._references[tracklet.track_id] = tracklet

        assigned = {t.track_id for t in holder.values()}
        candidates = [t for t in self._references.values() if t.track_id not in assigned]
        merges: list[MergeEvent] = []
        for col in sorted(holder, key=lambda c: holder[c].track_id):
            tracklet = holder[col]
            eligible = [c for c in candidates if c.last_frame < tracklet.first_frame]
            match = reconnect(tracklet, eligible, cfg.fbtr_threshold)
            if match is None:
                continue
            surviving = match.surviving
            self._absorb(tracklet, surviving)
            holder[col] = surviving
            candidates.remove(surviving)
            merges.append(MergeEvent(frame=frame, absorbed_id=tracklet.track_id, surviving_id=surviving.track_id))
            logger.info(
                "fbtr_merge frame=%s absorbed=%s surviving=%s score=%.4f",
                frame,
                tracklet.track_id,
                surviving.track_id,
                match.score,
            )
        return merges

    def run(self, stream: Iterable[DetectionRecord]) -> TrackingResult:
        """Track a whole stream. Frames without detections are stepped as empty frames."""
        entries: list[Assignment] = []
        merges: list[MergeEvent] = []
        num_frames = 0
        num_detections = 0
        elapsed = 0.0
        for frame, records in group_frames(stream):
            start = frame if self._last_frame is None else self._last_frame + 1
            if frame < start:
                raise OrderingError(f"frame {frame} presented after frame {self._last_frame}")
            tick = time.perf_counter()
            for empty_frame in range(start, frame):
                self.step(empty_frame, [])
            output = self.step(frame, records)
            elapsed += time.perf_counter() - tick
            entries.extend(output.entries)
            merges.extend(output.merges)
            num_frames += frame - start + 1
            num_detections += len(records)

        log = AssignmentLog(entries=entries)
        if self.config.cm_enabled:
            tick = time.perf_counter()
            log = correction.apply(log, self.merge_set)
            elapsed += time.perf_counter() - tick
        logger.info(
            "run_finished frames=%s detections=%s tracks=%s merges=%s elapsed_sec=%.3f",
            num_frames,
            num_detections,
            len(self.tracklets),
            len(merges),
            elapsed,
        )
        return TrackingResult(
            log=log,
            merges=merges,
            merge_set=self.merge_set.snapshot(),
            num_frames=num_frames,
            num_detections=num_detections,
            elapsed_sec=elapsed,
        )


def run(stream: Iterable[DetectionRecord], config: TrackerConfig) -> AssignmentLog:
    return TrackerEngine(config).run(stream).log
