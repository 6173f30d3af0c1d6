import io

import pytest

from conftest import as_source
from facetrack.services.core_model import BBox
from facetrack.services.correction import (
    MERGE_EVENTS_HEADER,
    MergeEvent,
    MergeSet,
    apply,
    parse_merge_events,
    write_merge_events,
)
from facetrack.services.ingest import Assignment, AssignmentLog, ParseError


def _log(*track_ids):
    return AssignmentLog(
        entries=[Assignment(frame=f, det_id=0, box=BBox(0, 0, 5, 5), track_id=t) for f, t in enumerate(track_ids)]
    )


def test_canonical_is_lowest_id_of_class():
    merges = MergeSet()
    merges.record_merge(5, 3)
    merges.record_merge(9, 5)
    merges.record_merge(2, 9)  # lower absorbed ID still wins
    assert {merges.canonical(t) for t in (2, 3, 5, 9)} == {2}
    assert merges.canonical(4) == 4
    assert len(merges) == 3


def test_record_merge_within_class_is_noop():
    merges = MergeSet()
    merges.record_merge(2, 1)
    merges.record_merge(1, 2)
    assert len(merges) == 1


def test_apply_rewrites_and_is_idempotent():
    merges = MergeSet.from_events([MergeEvent(10, 4, 1), MergeEvent(20, 6, 4)])
    once = apply(_log(1, 4, 6, 2), merges)
    assert [e.track_id for e in once.entries] == [1, 1, 1, 2]
    assert apply(once, merges).entries == once.entries


def test_apply_without_merges_copies():
    log = _log(1, 2)
    out = apply(log, MergeSet())
    assert out.entries == log.entries
    assert out.entries is not log.entries


def test_snapshot_is_independent():
    merges = MergeSet()
    merges.record_merge(2, 1)
    frozen = merges.snapshot()
    merges.record_merge(3, 1)
    assert frozen.canonical(3) == 3
    assert merges.canonical(3) == 1


def test_merge_events_io():
    events = [MergeEvent(12, 3, 1), MergeEvent(40, 7, 2)]
    sink = io.BytesIO()
    write_merge_events(events, sink)
    assert sink.getvalue().decode().splitlines()[0] == MERGE_EVENTS_HEADER
    assert parse_merge_events(io.BytesIO(sink.getvalue())) == events
    assert parse_merge_events(as_source("5,2,1\n")) == [MergeEvent(5, 2, 1)]


def test_merge_events_reject_bad_rows():
    with pytest.raises(ParseError):
        parse_merge_events(as_source(MERGE_EVENTS_HEADER + "\n1,2\n"))
    with pytest.raises(ParseError):
        parse_merge_events(as_source("1,x,2\n"))
