"""Retroactive track-ID rewriting after reconnections.

Merges are kept in a union-find whose representative is always the lowest
(oldest) ID of its class; rewriting a log is one pass over it.
"""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Iterable

from facetrack.services.ingest import AssignmentLog, ParseError, _iter_lines, _to_int

logger = logging.getLogger(__name__)

MERGE_EVENTS_HEADER = "frame,absorbed_id,surviving_id"


@dataclass(frozen=True)
class MergeEvent:
    frame: int
    absorbed_id: int
    surviving_id: int


@dataclass
class MergeSet:
    _parent: dict[int, int] = field(default_factory=dict)

    def canonical(self, track_id: int) -> int:
        root = track_id
        while self._parent.get(root, root) != root:
            root = self._parent[root]
        # path compression
        node = track_id
        while node != root:
            nxt = self._parent[node]
            self._parent[node] = root
            node = nxt
        return root

    def record_merge(self, absorbed_id: int, surviving_id: int) -> None:
        a = self.canonical(absorbed_id)
        b = self.canonical(surviving_id)
        if a == b:
            return
        low, high = (a, b) if a < b else (b, a)
        self._parent[high] = low
        self._parent.setdefault(low, low)

    def snapshot(self) -> MergeSet:
        return MergeSet(_parent=copy.copy(self._parent))

    def __len__(self) -> int:
        return sum(1 for node, parent in self._parent.items() if node != parent)

    @classmethod
    def from_events(cls, events: Iterable[MergeEvent]) -> MergeSet:
        merges = cls()
        for event in events:
            merges.record_merge(event.absorbed_id, event.surviving_id)
        return merges


def apply(log: AssignmentLog, merges: MergeSet) -> AssignmentLog:
    """Replace every track ID with its canonical representative."""
    if not len(merges):
        return AssignmentLog(entries=list(log.entries))
    entries = [
        entry if merges.canonical(entry.track_id) == entry.track_id
        else replace(entry, track_id=merges.canonical(entry.track_id))
        for entry in log.entries
    ]
    logger.debug("correction_applied entries=%s merges=%s", len(entries), len(merges))
    return AssignmentLog(entries=entries)


def write_merge_events(events: Iterable[MergeEvent], sink: IO[bytes]) -> None:
    sink.write((MERGE_EVENTS_HEADER + "\n").encode("utf-8"))
    for e in events:
        sink.write(f"{e.frame},{e.absorbed_id},{e.surviving_id}\n".encode("utf-8"))


def parse_merge_events(source: IO[bytes] | Iterable[bytes]) -> list[MergeEvent]:
    events: list[MergeEvent] = []
    for position, (line_no, text) in enumerate(_iter_lines(source)):
        if position == 0 and text == MERGE_EVENTS_HEADER:
            continue
        parts = text.split(",")
        if len(parts) != 3:
            raise ParseError(f"expected 3 fields, got {len(parts)}", line_no)
        events.append(
            MergeEvent(
                frame=_to_int(parts[0], line_no, "frame"),
                absorbed_id=_to_int(parts[1], line_no, "absorbed_id"),
                surviving_id=_to_int(parts[2], line_no, "surviving_id"),
            )
        )
    return events


def read_merge_events(path: str | Path) -> list[MergeEvent]:
    with open(path, "rb") as fh:
        return parse_merge_events(fh)
