import argparse
import asyncio
import logging
import sys
from typing import Optional, Sequence

from facetrack import __version__
from facetrack.config import PREDICTOR_KEYS, ConfigError, load_settings
from facetrack.db.repository import Repository
from facetrack.handlers.commands import (
    CommandContext,
    cmd_ablate,
    cmd_benchmark,
    cmd_evaluate,
    cmd_runs,
    cmd_synth,
    cmd_track,
)
from facetrack.services.core_model import EmbeddingError, InvalidValueError
from facetrack.services.fixtures import FIXTURE_ORDER
from facetrack.services.ingest import AssignmentConflictError, OrderingError, ParseError, RecordValidationError
from facetrack.services.metrics import MetricError
from facetrack.services.reporting import REPORT_FORMATS

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CONFIG = 2
EXIT_METRIC = 3

INPUT_ERRORS = (
    ParseError,
    RecordValidationError,
    OrderingError,
    AssignmentConflictError,
    EmbeddingError,
    InvalidValueError,
    OSError,
)


def _add_tracker_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("tracker")
    group.add_argument("--iou-thresh", type=float, default=None, help="Association IOU gate (default 0.25).")
    group.add_argument("--fbtr-thresh", type=float, default=None, help="Reconnection similarity threshold (default 0.7).")
    group.add_argument("--tmax", type=int, default=None, help="Frames a tracklet survives undetected (default 10).")
    group.add_argument("--predictor", choices=PREDICTOR_KEYS, default=None, help="Motion predictor (default cv).")
    group.add_argument("--no-fbtr", action="store_true", help="Disable face-based reconnection.")
    group.add_argument("--no-cm", action="store_true", help="Disable retroactive ID correction.")
    group.add_argument(
        "--embedding-dim",
        type=int,
        default=None,
        help="Expected embedding size (default: FACETRACK_EMBEDDING_DIM, else the first embedding's size).",
    )


def _add_pair_inputs(parser: argparse.ArgumentParser, first: str, second: str) -> None:
    parser.add_argument("first", nargs="?", metavar=first.upper())
    parser.add_argument("second", nargs="?", metavar=second.upper())
    parser.add_argument(
        "--pair",
        nargs=2,
        action="append",
        metavar=(first.upper(), second.upper()),
        help="Additional input pair (repeatable).",
    )
    parser.add_argument("--gt-min-confidence", type=float, default=0.0, help="Drop GT rows below this confidence.")
    parser.add_argument("--gt-iou", type=float, default=None, help="GT matching IOU gate (default 0.5).")


def _add_output_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--report-format", choices=REPORT_FORMATS, default="text")
    parser.add_argument("--no-timing", action="store_true", help="Omit timing so outputs are byte-comparable.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="facetrack", description="Long-term multi-face tracking.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--db-url", default=None, help="Results store URL (overrides DATABASE_URL).")
    sub = parser.add_subparsers(dest="command", required=True)

    track = sub.add_parser("track", help="Track a detection stream.")
    track.add_argument("detections", nargs="?")
    track.add_argument("-o", "--out", default=None, help="Assignments output file.")
    track.add_argument("--events-out", default=None, help="Merge events output file.")
    track.add_argument("--manifest-out", default=None, help="Manifest path (default <out>.manifest.json).")
    track.add_argument("--from-manifest", default=None, help="Re-run a previous invocation from its manifest.")
    track.add_argument("--no-timing", action="store_true")
    _add_tracker_flags(track)
    track.set_defaults(func=cmd_track)

    evaluate = sub.add_parser("evaluate", help="Score assignments against ground truth.")
    _add_pair_inputs(evaluate, "assignments", "gt")
    evaluate.add_argument("--manifest", action="append", help="Track manifest per pair, for FPS.")
    evaluate.add_argument("--events", action="append", help="Merge events per pair; canonicalises the log first.")
    evaluate.add_argument("--report", default=None, help="Report file (default stdout).")
    evaluate.add_argument("--crp-prefix", default=None, help="Write <prefix>.csv and <prefix>.svg.")
    _add_output_flags(evaluate)
    evaluate.set_defaults(func=cmd_evaluate)

    ablate = sub.add_parser("ablate", help="Run the five ablation configurations.")
    _add_pair_inputs(ablate, "detections", "gt")
    ablate.add_argument("--out-dir", default="ablation", help="Directory for report, CRP CSVs and plot.")
    _add_output_flags(ablate)
    _add_tracker_flags(ablate)
    ablate.set_defaults(func=cmd_ablate)

    benchmark = sub.add_parser("benchmark", help="Compare motion predictors.")
    _add_pair_inputs(benchmark, "detections", "gt")
    benchmark.add_argument("--report", default=None)
    _add_output_flags(benchmark)
    _add_tracker_flags(benchmark)
    benchmark.set_defaults(func=cmd_benchmark)

    synth = sub.add_parser("synth", help="Generate a synthetic scenario.")
    synth.add_argument("scenario", nargs="?", help="Scenario YAML file.")
    synth.add_argument("--fixture", choices=[*FIXTURE_ORDER, "all"], default=None)
    synth.add_argument("--random-seed", type=int, default=None)
    synth.add_argument("--seed", type=int, default=None, help="Override the scenario seed.")
    synth.add_argument("--out-dir", default=".", help="Output directory.")
    synth.set_defaults(func=cmd_synth)

    runs = sub.add_parser("runs", help="List recorded runs.")
    runs.add_argument("--limit", type=int, default=20)
    runs.set_defaults(func=cmd_runs)
    return parser


async def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings()
    except ConfigError as exc:
        logging.basicConfig(level=logging.INFO)
        logger.error("config_invalid error=%s", exc)
        return EXIT_CONFIG

    logging.basicConfig(
        level=getattr(logging, settings.log_level),
        format="%(asctime)s %(levelname)s [%(name)s] %(message)s",
    )

    repo = None
    database_url = args.db_url or settings.database_url
    try:
        if database_url:
            repo = await Repository.create(database_url)
        return await args.func(args, CommandContext(settings=settings, repo=repo))
    except ConfigError as exc:
        logger.error("config_invalid error=%s", exc)
        return EXIT_CONFIG
    except MetricError as exc:
        logger.error("metric_undefined error=%s", exc)
        return EXIT_METRIC
    except INPUT_ERRORS as exc:
        logger.error("input_invalid error=%s", exc)
        return EXIT_INPUT
    finally:
        if repo is not None:
            await repo.close()


def run() -> None:
    sys.exit(asyncio.run(main()))


if __name__ == "__main__":
    run()
