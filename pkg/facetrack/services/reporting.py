from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Any, Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import yaml  # noqa: E402

from facetrack.config import ConfigError  # noqa: E402
from facetrack.services.metrics import MetricError, MetricsReport, aggregate  # noqa: E402

logger = logging.getLogger(__name__)

REPORT_FORMATS = ("text", "json")
CRP_HEADER = "X,CR_X"

# Fixed hash salt and no date keep SVG output byte-identical across runs.
plt.rcParams["svg.hashsalt"] = "facetrack"


@dataclass
class ReportSection:
    """Metrics of one configuration over one or more videos."""

    label: str
    videos: dict[str, MetricsReport]
    aggregate: MetricsReport

    @classmethod
    def build(cls, label: str, videos: Mapping[str, MetricsReport]) -> ReportSection:
        return cls(label=label, videos=dict(videos), aggregate=aggregate(videos))

    def as_dict(self) -> dict[str, Any]:
        return {
            "videos": {name: r.as_dict() for name, r in self.videos.items()},
            "aggregate": self.aggregate.as_dict(),
        }


def emit_report(
    sections: Sequence[ReportSection],
    sink: IO[str],
    fmt: str = "text",
    meta: Optional[Mapping[str, Any]] = None,
) -> None:
    document = {
        "meta": dict(meta or {}),
        "sections": {s.label: s.as_dict() for s in sections},
    }
    if fmt == "json":
        json.dump(document, sink, indent=2)
        sink.write("\n")
    elif fmt == "text":
        yaml.safe_dump(document, sink, sort_keys=False, default_flow_style=None)
    else:
        raise ConfigError(f"unknown report format {fmt!r}")


def read_report(source: IO[str] | str) -> tuple[list[ReportSection], dict[str, Any]]:
    """Parse a report written by :func:`emit_report` in either format."""
    text = source if isinstance(source, str) else source.read()
    try:
        document = json.loads(text)
    except json.JSONDecodeError:
        document = yaml.safe_load(text)
    if not isinstance(document, dict) or "sections" not in document:
        raise MetricError("not a metrics report")
    sections = [
        ReportSection(
            label=label,
            videos={name: MetricsReport.from_dict(r) for name, r in body["videos"].items()},
            aggregate=MetricsReport.from_dict(body["aggregate"]),
        )
        for label, body in document["sections"].items()
    ]
    return sections, dict(document.get("meta") or {})


def format_table(sections: Sequence[ReportSection], with_timing: bool = True) -> str:
    columns = ["configuration", "video", "Frag", "ID-Switches", "CRS"]
    if with_timing:
        columns.append("FPS")
    rows: list[list[str]] = []

    def add(label: str, video: str, report: MetricsReport) -> None:
        row = [label, video, f"{report.frag:.5f}", f"{report.idsw:.5f}", f"{report.crs:.3f}"]
        if with_timing:
            row.append("-" if report.fps is None else f"{report.fps:.1f}")
        rows.append(row)

    multi_video = any(len(s.videos) > 1 for s in sections)
    videos = sorted({v for s in sections for v in s.videos})
    for video in videos:
        for s in sections:
            if video in s.videos:
                add(s.label, video, s.videos[video])
    if multi_video:
        for s in sections:
            add(s.label, "(all)", s.aggregate)

    widths = [max(len(c), *(len(r[i]) for r in rows)) if rows else len(c) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip()]
    lines.extend("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in rows)
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------
# Completion rate plot
# ----------------------------------------------------------------------


def write_crp_csv(report: MetricsReport, sink: IO[str]) -> None:
    """CR_X for X = 0..100, one row each."""
    sink.write(CRP_HEADER + "\n")
    for x in range(0, 101):
        sink.write(f"{x},{report.cr_at(x)!r}\n")


def read_crp_csv(source: IO[str]) -> list[tuple[int, float]]:
    lines = [line.strip() for line in source if line.strip()]
    if not lines or lines[0] != CRP_HEADER:
        raise MetricError("missing CRP header")
    rows = []
    for line in lines[1:]:
        x, value = line.split(",")
        rows.append((int(x), float(value)))
    return rows


def plot_crp(curves: Mapping[str, MetricsReport], path: str | Path, title: str = "Completion rate") -> None:
    """Step plot of one or more CR curves, overlaid on one axis."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    xs = list(range(0, 101))
    for label, report in curves.items():
        ax.step(xs, [report.cr_at(x) for x in xs], where="post", label=f"{label} (CRS {report.crs:.3f})")
    ax.set_xlim(0, 100)
    ax.set_ylim(0, 1.05)
    ax.set_xlabel("X (% of ground-truth detections correctly identified)")
    ax.set_ylabel("CR_X")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower left")
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.debug("crp_plot_written path=%s curves=%s", path, len(curves))


def emit_crp(report: MetricsReport, csv_path: str | Path, svg_path: str | Path, label: str = "tracker") -> None:
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        write_crp_csv(report, fh)
    plot_crp({label: report}, svg_path)
