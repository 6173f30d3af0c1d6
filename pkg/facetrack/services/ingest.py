"""Readers and writers for detection streams, ground truth and track assignments.

Detection stream (one header line, then one record per line, ``;``-separated)::

    frame;det_id;x;y;w;h;confidence;yaw;pitch;roll;blur;embedding
    0;0;100.0;80.0;40.0;40.0;0.98;3.5;-1.0;0.2;0.95;0.01,-0.2,...

Columns are matched by header name; ``embedding`` is a comma-separated float
list and may be empty. Ground truth is ``frame,identity,x,y,w,h[,confidence]``
with an optional header; assignments are ``frame,track_id,x,y,w,h,det_id``.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Optional

import numpy as np

from facetrack import FaceTrackError
from facetrack.services.core_model import (
    BBox,
    EmbeddingError,
    InvalidValueError,
    QualityAttrs,
    as_embedding,
)

logger = logging.getLogger(__name__)

DETECTION_COLUMNS = (
    "frame", "det_id", "x", "y", "w", "h",
    "confidence", "yaw", "pitch", "roll", "blur", "embedding",
)
ASSIGNMENT_HEADER = "frame,track_id,x,y,w,h,det_id"
DETECTION_DELIMITER = ";"

_QUALITY_FIELDS = {"confidence": "det_confidence", "yaw": "yaw", "pitch": "pitch", "roll": "roll", "blur": "blur"}


class ParseError(FaceTrackError):
    def __init__(self, message: str, line_no: int) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class RecordValidationError(FaceTrackError):
    def __init__(self, message: str, line_no: int, field_name: str) -> None:
        super().__init__(f"line {line_no}: invalid {field_name}: {message}")
        self.line_no = line_no
        self.field = field_name


class OrderingError(FaceTrackError):
    pass


class AssignmentConflictError(FaceTrackError):
    pass


@dataclass(frozen=True)
class DetectionRecord:
    frame: int
    det_id: int
    box: BBox
    quality: QualityAttrs
    embedding: Optional[np.ndarray] = field(default=None, compare=False)


@dataclass(frozen=True)
class GroundTruthEntry:
    frame: int
    identity: str
    box: BBox


@dataclass
class GroundTruth:
    entries: list[GroundTruthEntry] = field(default_factory=list)

    @property
    def num_dets(self) -> int:
        return len(self.entries)

    def identities(self) -> list[str]:
        return sorted({e.identity for e in self.entries})

    def by_frame(self) -> dict[int, list[GroundTruthEntry]]:
        frames: dict[int, list[GroundTruthEntry]] = {}
        for entry in self.entries:
            frames.setdefault(entry.frame, []).append(entry)
        return frames

    def counts_by_identity(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for entry in self.entries:
            counts[entry.identity] = counts.get(entry.identity, 0) + 1
        return counts


@dataclass(frozen=True)
class Assignment:
    frame: int
    det_id: int
    box: BBox
    track_id: int


@dataclass
class AssignmentLog:
    entries: list[Assignment] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def track_ids(self) -> list[int]:
        return sorted({e.track_id for e in self.entries})

    def by_frame(self) -> dict[int, list[Assignment]]:
        frames: dict[int, list[Assignment]] = {}
        for entry in self.entries:
            frames.setdefault(entry.frame, []).append(entry)
        return frames

    def validate(self) -> None:
        seen_dets: set[tuple[int, int]] = set()
        seen_tracks: set[tuple[int, int]] = set()
        for entry in self.entries:
            det_key = (entry.frame, entry.det_id)
            track_key = (entry.frame, entry.track_id)
            if det_key in seen_dets:
                raise AssignmentConflictError(f"detection {det_key} assigned twice")
            if track_key in seen_tracks:
                raise AssignmentConflictError(f"track {entry.track_id} holds two detections in frame {entry.frame}")
            seen_dets.add(det_key)
            seen_tracks.add(track_key)


def _iter_lines(source: IO[bytes] | Iterable[bytes]) -> Iterator[tuple[int, str]]:
    for line_no, raw in enumerate(source, start=1):
        if isinstance(raw, bytes):
            try:
                raw = raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise ParseError(f"invalid UTF-8 at byte {exc.start}", line_no) from exc
        text = raw.strip()
        if text:
            yield line_no, text


def _to_int(raw: str, line_no: int, name: str) -> int:
    try:
        return int(raw)
    except ValueError as exc:
        raise ParseError(f"{name} is not an integer: {raw!r}", line_no) from exc


def _to_float(raw: str, line_no: int, name: str) -> float:
    try:
        return float(raw)
    except ValueError as exc:
        raise ParseError(f"{name} is not a number: {raw!r}", line_no) from exc


def _make_box(values: tuple[float, float, float, float], line_no: int) -> BBox:
    try:
        return BBox(*values)
    except InvalidValueError as exc:
        raise RecordValidationError(str(exc), line_no, "box") from exc


def fmt_float(value: float) -> str:
    return repr(float(value))


# ----------------------------------------------------------------------
# Detections
# ----------------------------------------------------------------------


def iter_detections(
    source: IO[bytes] | Iterable[bytes],
    embedding_dim: Optional[int] = None,
) -> Iterator[DetectionRecord]:
    """Single-pass validating reader; yields records as soon as they parse."""
    lines = _iter_lines(source)
    first = next(lines, None)
    if first is None:
        return
    header_line_no, header = first
    columns = [c.strip() for c in header.split(DETECTION_DELIMITER)]
    missing = [c for c in DETECTION_COLUMNS if c != "embedding" and c not in columns]
    if missing:
        raise ParseError(f"header is missing columns {missing}", header_line_no)
    index = {name: i for i, name in enumerate(columns)}

    last_frame = -1
    frame_det_ids: set[int] = set()
    dim = embedding_dim
    for line_no, text in lines:
        parts = text.split(DETECTION_DELIMITER)
        if len(parts) != len(columns):
            raise ParseError(f"expected {len(columns)} fields, got {len(parts)}", line_no)
        frame = _to_int(parts[index["frame"]], line_no, "frame")
        det_id = _to_int(parts[index["det_id"]], line_no, "det_id")
        if frame < 0:
            raise RecordValidationError("frame must be >= 0", line_no, "frame")
        if frame < last_frame:
            raise OrderingError(f"line {line_no}: frame {frame} after frame {last_frame}")
        if frame != last_frame:
            frame_det_ids.clear()
            last_frame = frame
        if det_id in frame_det_ids:
            raise RecordValidationError(f"duplicate det_id {det_id} in frame {frame}", line_no, "det_id")
        frame_det_ids.add(det_id)

        box = _make_box(
            tuple(_to_float(parts[index[k]], line_no, k) for k in ("x", "y", "w", "h")),  # type: ignore[arg-type]
            line_no,
        )
        quality_values = {
            attr: _to_float(parts[index[col]], line_no, col) for col, attr in _QUALITY_FIELDS.items()
        }
        for col, attr in _QUALITY_FIELDS.items():
            value = quality_values[attr]
            bounds = (-180.0, 180.0) if col in ("yaw", "pitch", "roll") else (0.0, 1.0)
            if not bounds[0] <= value <= bounds[1]:
                raise RecordValidationError(f"{value} outside {list(bounds)}", line_no, col)
        quality = QualityAttrs(**quality_values)

        embedding = None
        raw_embedding = parts[index["embedding"]].strip() if "embedding" in index else ""
        if raw_embedding:
            values = [_to_float(v, line_no, "embedding") for v in raw_embedding.split(",")]
            try:
                embedding = as_embedding(values, dim)
            except EmbeddingError as exc:
                raise RecordValidationError(str(exc), line_no, "embedding") from exc
            dim = embedding.size

        yield DetectionRecord(frame=frame, det_id=det_id, box=box, quality=quality, embedding=embedding)


def parse_detections(
    source: IO[bytes] | Iterable[bytes],
    embedding_dim: Optional[int] = None,
) -> list[DetectionRecord]:
    return list(iter_detections(source, embedding_dim))


def group_frames(records: Iterable[DetectionRecord]) -> Iterator[tuple[int, list[DetectionRecord]]]:
    for frame, group in itertools.groupby(records, key=lambda r: r.frame):
        yield frame, list(group)


def write_detections(records: Iterable[DetectionRecord], sink: IO[bytes]) -> None:
    sink.write((DETECTION_DELIMITER.join(DETECTION_COLUMNS) + "\n").encode("utf-8"))
    for r in records:
        q = r.quality
        embedding = "" if r.embedding is None else ",".join(fmt_float(v) for v in r.embedding)
        fields = [
            str(r.frame), str(r.det_id),
            *(fmt_float(v) for v in r.box.as_tuple()),
            fmt_float(q.det_confidence), fmt_float(q.yaw), fmt_float(q.pitch), fmt_float(q.roll), fmt_float(q.blur),
            embedding,
        ]
        sink.write((DETECTION_DELIMITER.join(fields) + "\n").encode("utf-8"))


def read_detections(path: str | Path, embedding_dim: Optional[int] = None) -> list[DetectionRecord]:
    with open(path, "rb") as fh:
        return parse_detections(fh, embedding_dim)


# ----------------------------------------------------------------------
# Ground truth
# ----------------------------------------------------------------------


def parse_ground_truth(source: IO[bytes] | Iterable[bytes], min_confidence: float = 0.0) -> GroundTruth:
    entries: list[GroundTruthEntry] = []
    seen: set[tuple[int, str]] = set()
    dropped = 0
    for position, (line_no, text) in enumerate(_iter_lines(source)):
        parts = [p.strip() for p in text.split(",")]
        if position == 0 and not parts[0].lstrip("-").isdigit():
            continue  # header
        if len(parts) not in (6, 7):
            raise ParseError(f"expected 6 or 7 fields, got {len(parts)}", line_no)
        frame = _to_int(parts[0], line_no, "frame")
        if frame < 0:
            raise RecordValidationError("frame must be >= 0", line_no, "frame")
        identity = parts[1]
        if not identity:
            raise RecordValidationError("empty identity", line_no, "identity")
        box = _make_box(
            tuple(_to_float(v, line_no, k) for v, k in zip(parts[2:6], ("x", "y", "w", "h"))),  # type: ignore[arg-type]
            line_no,
        )
        if len(parts) == 7 and _to_float(parts[6], line_no, "confidence") < min_confidence:
            dropped += 1
            continue
        key = (frame, identity)
        if key in seen:
            raise RecordValidationError(f"duplicate entry for identity {identity!r} in frame {frame}", line_no, "identity")
        seen.add(key)
        entries.append(GroundTruthEntry(frame=frame, identity=identity, box=box))
    if dropped:
        logger.info("gt_low_confidence_dropped count=%s min_confidence=%s", dropped, min_confidence)
    entries.sort(key=lambda e: e.frame)
    return GroundTruth(entries=entries)


def write_ground_truth(gt: GroundTruth, sink: IO[bytes]) -> None:
    sink.write(b"frame,identity,x,y,w,h\n")
    for e in gt.entries:
        line = ",".join([str(e.frame), e.identity, *(fmt_float(v) for v in e.box.as_tuple())])
        sink.write((line + "\n").encode("utf-8"))


def read_ground_truth(path: str | Path, min_confidence: float = 0.0) -> GroundTruth:
    with open(path, "rb") as fh:
        return parse_ground_truth(fh, min_confidence)


# ----------------------------------------------------------------------
# Assignments
# ----------------------------------------------------------------------


def format_assignment(entry: Assignment) -> str:
    return ",".join(
        [str(entry.frame), str(entry.track_id), *(fmt_float(v) for v in entry.box.as_tuple()), str(entry.det_id)]
    )


def write_assignments(log: AssignmentLog, sink: IO[bytes]) -> None:
    sink.write((ASSIGNMENT_HEADER + "\n").encode("utf-8"))
    for entry in log.entries:
        sink.write((format_assignment(entry) + "\n").encode("utf-8"))


def parse_assignments(source: IO[bytes] | Iterable[bytes]) -> AssignmentLog:
    entries: list[Assignment] = []
    for position, (line_no, text) in enumerate(_iter_lines(source)):
        if position == 0 and text == ASSIGNMENT_HEADER:
            continue
        parts = text.split(",")
        if len(parts) != 7:
            raise ParseError(f"expected 7 fields, got {len(parts)}", line_no)
        box = _make_box(
            tuple(_to_float(v, line_no, k) for v, k in zip(parts[2:6], ("x", "y", "w", "h"))),  # type: ignore[arg-type]
            line_no,
        )
        entries.append(
            Assignment(
                frame=_to_int(parts[0], line_no, "frame"),
                track_id=_to_int(parts[1], line_no, "track_id"),
                box=box,
                det_id=_to_int(parts[6], line_no, "det_id"),
            )
        )
    log = AssignmentLog(entries=entries)
    log.validate()
    return log


def read_assignments(path: str | Path) -> AssignmentLog:
    with open(path, "rb") as fh:
        return parse_assignments(fh)
