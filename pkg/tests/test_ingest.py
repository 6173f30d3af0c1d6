import io

import numpy as np
import pytest

from conftest import as_source, det
from facetrack.services.ingest import (
    Assignment,
    AssignmentConflictError,
    AssignmentLog,
    OrderingError,
    ParseError,
    RecordValidationError,
    group_frames,
    iter_detections,
    parse_assignments,
    parse_detections,
    parse_ground_truth,
    write_assignments,
    write_detections,
)
from facetrack.services.core_model import BBox

HEADER = "frame;det_id;x;y;w;h;confidence;yaw;pitch;roll;blur;embedding\n"


def test_parse_detections_basic():
    text = HEADER + "0;0;10;20;30;40;0.98;1;2;3;0.95;1,0,0\n" + "0;1;100;20;30;40;0.9;1;2;3;0.8;\n"
    records = parse_detections(as_source(text))
    assert len(records) == 2
    assert records[0].box == BBox(10, 20, 30, 40)
    assert records[0].quality.det_confidence == 0.98
    assert records[0].embedding.tolist() == [1.0, 0.0, 0.0]
    assert records[1].embedding is None


def test_columns_are_matched_by_name():
    text = "det_id;frame;x;y;w;h;blur;confidence;yaw;pitch;roll\n" + "3;7;1;2;3;4;0.5;0.9;0;0;0\n"
    (record,) = parse_detections(as_source(text))
    assert (record.frame, record.det_id) == (7, 3)
    assert record.quality.blur == 0.5


def test_empty_input_yields_nothing():
    assert parse_detections(as_source("")) == []
    assert parse_detections(as_source(HEADER)) == []


def test_missing_header_column():
    with pytest.raises(ParseError) as err:
        parse_detections(as_source("frame;det_id;x;y;w;h\n"))
    assert err.value.line_no == 1


def test_bad_number_reports_line():
    text = HEADER + "0;0;10;20;30;40;0.98;1;2;3;0.95;\n" + "1;0;ten;20;30;40;0.98;1;2;3;0.95;\n"
    with pytest.raises(ParseError) as err:
        parse_detections(as_source(text))
    assert err.value.line_no == 3


@pytest.mark.parametrize(
    "row,field",
    [
        ("0;0;10;20;30;40;1.5;1;2;3;0.95;", "confidence"),
        ("0;0;10;20;30;40;0.9;200;2;3;0.95;", "yaw"),
        ("0;0;10;20;30;40;0.9;1;2;3;-0.1;", "blur"),
        ("0;0;10;20;0;40;0.9;1;2;3;0.5;", "box"),
        ("-1;0;10;20;30;40;0.9;1;2;3;0.5;", "frame"),
    ],
)
def test_record_validation_names_the_field(row, field):
    with pytest.raises(RecordValidationError) as err:
        parse_detections(as_source(HEADER + row + "\n"))
    assert err.value.field == field
    assert err.value.line_no == 2


def test_frame_regression_is_rejected():
    text = HEADER + "2;0;1;1;5;5;0.9;0;0;0;0.9;\n" + "1;0;1;1;5;5;0.9;0;0;0;0.9;\n"
    with pytest.raises(OrderingError):
        parse_detections(as_source(text))


def test_duplicate_det_id_in_frame():
    text = HEADER + "0;4;1;1;5;5;0.9;0;0;0;0.9;\n" + "0;4;9;1;5;5;0.9;0;0;0;0.9;\n"
    with pytest.raises(RecordValidationError) as err:
        parse_detections(as_source(text))
    assert err.value.field == "det_id"


def test_invalid_utf8_is_a_parse_error():
    source = io.BytesIO(HEADER.encode("utf-8") + b"0;0;10;20;30;40;0.98;1;2;3;0.95;\xff\xfe\n")
    with pytest.raises(ParseError) as err:
        parse_detections(source)
    assert err.value.line_no == 2
    with pytest.raises(ParseError) as err:
        parse_ground_truth(io.BytesIO(b"0,alice,1,1,5,5\n1,\xe9ve,1,1,5,5\n"))
    assert err.value.line_no == 2


def test_embedding_dimension_is_enforced():
    text = HEADER + "0;0;1;1;5;5;0.9;0;0;0;0.9;1,2,3\n" + "0;1;9;1;5;5;0.9;0;0;0;0.9;1,2\n"
    with pytest.raises(RecordValidationError) as err:
        parse_detections(as_source(text))
    assert err.value.field == "embedding"
    with pytest.raises(RecordValidationError):
        parse_detections(as_source(HEADER + "0;0;1;1;5;5;0.9;0;0;0;0.9;1,2,3\n"), embedding_dim=4)


def test_iter_detections_is_lazy():
    text = HEADER + "0;0;1;1;5;5;0.9;0;0;0;0.9;\n" + "bad line\n"
    records = iter_detections(as_source(text))
    first = next(records)
    assert first.frame == 0
    with pytest.raises(ParseError):
        next(records)


def test_detections_survive_write_and_read():
    records = [
        det(0, 0, 10.5, 20.25, embedding=[0.1, 0.2, 0.3]),
        det(0, 1, 100.0, 20.0),
        det(3, 0, 1.0 / 3.0, 2.0, embedding=[1e-7, -2.5, 3.0]),
    ]
    sink = io.BytesIO()
    write_detections(records, sink)
    again = parse_detections(io.BytesIO(sink.getvalue()))
    assert again == records
    assert np.array_equal(again[2].embedding, records[2].embedding)


def test_group_frames():
    records = [det(0, 0, 0, 0), det(0, 1, 100, 0), det(4, 0, 0, 0)]
    groups = list(group_frames(records))
    assert [(f, len(r)) for f, r in groups] == [(0, 2), (4, 1)]


def test_ground_truth_with_header_and_confidence():
    text = "frame,identity,x,y,w,h,confidence\n" "1,bob,0,0,10,10,0.9\n" "0,alice,5,5,10,10,0.3\n" "0,bob,0,0,10,10,0.8\n"
    gt = parse_ground_truth(as_source(text), min_confidence=0.5)
    assert gt.num_dets == 2
    assert [e.frame for e in gt.entries] == [0, 1]
    assert gt.identities() == ["bob"]
    assert parse_ground_truth(as_source(text)).num_dets == 3


def test_ground_truth_rejects_duplicate_identity_in_frame():
    text = "0,a,0,0,10,10\n0,a,20,0,10,10\n"
    with pytest.raises(RecordValidationError):
        parse_ground_truth(as_source(text))


def test_assignments_round_trip_and_conflicts():
    log = AssignmentLog(
        entries=[
            Assignment(frame=0, det_id=0, box=BBox(1, 2, 3, 4), track_id=1),
            Assignment(frame=0, det_id=1, box=BBox(10, 2, 3, 4), track_id=2),
        ]
    )
    sink = io.BytesIO()
    write_assignments(log, sink)
    assert sink.getvalue().decode().splitlines()[0] == "frame,track_id,x,y,w,h,det_id"
    assert parse_assignments(io.BytesIO(sink.getvalue())).entries == log.entries

    clash = "0,1,1,2,3,4,0\n0,1,10,2,3,4,1\n"
    with pytest.raises(AssignmentConflictError):
        parse_assignments(as_source(clash))
