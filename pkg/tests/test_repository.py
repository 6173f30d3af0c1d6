import pytest

from conftest import gt_of
from facetrack.db.repository import AGGREGATE_VIDEO, Repository
from facetrack.db.session import _async_url
from facetrack.services.core_model import BBox
from facetrack.services.ingest import Assignment, AssignmentLog
from facetrack.services.metrics import evaluate
from facetrack.services.reporting import ReportSection


@pytest.fixture
async def repo():
    repository = await Repository.create("sqlite:///:memory:")
    yield repository
    await repository.close()


def _section():
    gt = gt_of([(f, "a", 0.0, 0.0) for f in range(4)])
    log = AssignmentLog(
        entries=[Assignment(frame=f, det_id=0, box=BBox(0, 0, 60, 60), track_id=1 if f < 2 else 2) for f in range(4)]
    )
    report = evaluate(gt, log, fps=50.0)
    return ReportSection.build("DA+TM", {"v1": report, "v2": report})


def test_async_url_mapping():
    assert _async_url("postgresql://u:p@h/db") == "postgresql+asyncpg://u:p@h/db"
    assert _async_url("sqlite:///x.db") == "sqlite+aiosqlite:///x.db"
    assert _async_url("postgresql+asyncpg://h/db") == "postgresql+asyncpg://h/db"


async def test_record_and_list_runs(repo):
    first = await repo.record_run("track", {"t_max": 10}, {"detections": "a.csv"}, frames=80, detections=65, fps=900.0)
    second = await repo.record_run("evaluate", {"gt_iou": 0.5}, {"pairs": [["a", "b"]]})
    runs = await repo.list_runs()
    assert [r.id for r in runs] == [second, first]
    assert runs[1].config == {"t_max": 10}
    assert runs[1].inputs == {"detections": "a.csv"}
    assert (runs[1].frames, runs[1].detections, runs[1].fps) == (80, 65, 900.0)
    assert runs[0].fps is None
    assert runs[0].created_at
    assert len(await repo.list_runs(limit=1)) == 1


async def test_record_metrics_adds_aggregate_row(repo):
    run_id = await repo.record_run("ablate", {"label": "DA+TM"}, {})
    assert await repo.record_metrics(run_id, [_section()]) == 3
    rows = await repo.list_metrics(run_id)
    assert [r.video for r in rows] == ["v1", "v2", AGGREGATE_VIDEO]
    aggregate = rows[-1]
    assert (aggregate.num_dets, aggregate.num_soft, aggregate.num_hard) == (8, 2, 0)
    assert aggregate.frag == pytest.approx(0.25)
    assert aggregate.fps == pytest.approx(50.0)
    assert await repo.list_metrics(run_id + 1) == []
