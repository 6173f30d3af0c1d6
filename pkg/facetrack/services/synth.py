"""Synthetic scenario generator.

A scenario is a set of scripted identities moving through an arena. Each
visible frame yields one detection with a box on the identity's trajectory,
quality attributes drawn for the identity's current quality state and an
embedding ``normalize(base + N(0, sigma^2))`` around the identity's base
vector. Geometry is fully determined by the config; the seed only drives
embeddings and quality draws.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np
import yaml

from facetrack.config import ConfigError
from facetrack.services.core_model import BBox, QualityAttrs, normalize
from facetrack.services.ingest import DetectionRecord, GroundTruth, GroundTruthEntry

logger = logging.getLogger(__name__)

QUALITY_STATES = ("enrollable", "verifiable", "discarded")
GT_OCCLUSION_MODES = ("suspended", "annotated")
PACKING_ATTEMPTS = 20000

Range = tuple[float, float]


@dataclass(frozen=True)
class QualityRanges:
    confidence: Range
    angle: Range
    blur: Range

    def sample(self, rng: np.random.Generator) -> QualityAttrs:
        yaw, pitch, roll = rng.uniform(self.angle[0], self.angle[1], size=3)
        return QualityAttrs(
            det_confidence=float(rng.uniform(*self.confidence)),
            yaw=float(yaw),
            pitch=float(pitch),
            roll=float(roll),
            blur=float(rng.uniform(*self.blur)),
        )


# Each state's ranges fall strictly inside one quality class of the default gates.
DEFAULT_QUALITY_PROFILE: dict[str, QualityRanges] = {
    "enrollable": QualityRanges(confidence=(0.96, 1.0), angle=(-20.0, 20.0), blur=(0.92, 1.0)),
    "verifiable": QualityRanges(confidence=(0.82, 0.94), angle=(-55.0, 55.0), blur=(0.76, 0.89)),
    "discarded": QualityRanges(confidence=(0.5, 0.78), angle=(-90.0, 90.0), blur=(0.3, 0.7)),
}


@dataclass(frozen=True)
class QualityWindow:
    start: int
    end: int
    state: str


@dataclass(frozen=True)
class IdentitySpec:
    """One scripted subject.

    Frames ``[enter, exit)`` are split into ``passes`` equal passes separated
    by ``gap`` absent frames; every pass restarts the trajectory at ``start``.
    Occlusion windows are half-open ``[start, end)`` frame intervals.
    """

    name: str
    start: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    size: tuple[float, float] = (60.0, 60.0)
    enter: int = 0
    exit: Optional[int] = None
    passes: int = 1
    gap: int = 0
    occlusions: tuple[tuple[int, int], ...] = ()
    quality: str = "enrollable"
    quality_windows: tuple[QualityWindow, ...] = ()
    reappear_discarded: int = 0

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> IdentitySpec:
        try:
            return cls(
                name=str(data["name"]),
                start=_pair(data["start"]),
                velocity=_pair(data.get("velocity", (0.0, 0.0))),
                size=_pair(data.get("size", (60.0, 60.0))),
                enter=int(data.get("enter", 0)),
                exit=None if data.get("exit") is None else int(data["exit"]),
                passes=int(data.get("passes", 1)),
                gap=int(data.get("gap", 0)),
                occlusions=tuple((int(a), int(b)) for a, b in data.get("occlusions", ())),
                quality=str(data.get("quality", "enrollable")),
                quality_windows=tuple(
                    QualityWindow(int(w["start"]), int(w["end"]), str(w["state"]))
                    for w in data.get("quality_windows", ())
                ),
                reappear_discarded=int(data.get("reappear_discarded", 0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid identity spec: {exc}") from exc

    def as_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "start": list(self.start),
            "velocity": list(self.velocity),
            "size": list(self.size),
            "enter": self.enter,
            "exit": self.exit,
            "passes": self.passes,
            "gap": self.gap,
            "occlusions": [list(w) for w in self.occlusions],
            "quality": self.quality,
            "quality_windows": [{"start": w.start, "end": w.end, "state": w.state} for w in self.quality_windows],
            "reappear_discarded": self.reappear_discarded,
        }


def _pair(value: Any) -> tuple[float, float]:
    a, b = value
    return float(a), float(b)


@dataclass(frozen=True)
class ScenarioConfig:
    frame_count: int
    identities: tuple[IdentitySpec, ...]
    arena: tuple[int, int] = (1920, 1080)
    embedding_dim: int = 512
    identity_separation: float = 60.0  # degrees
    noise_sigma: float = 0.01
    gt_during_occlusion: str = "suspended"
    quality_profile: Mapping[str, QualityRanges] = field(default_factory=lambda: dict(DEFAULT_QUALITY_PROFILE))
    seed: int = 0
    name: str = "scenario"

    def __post_init__(self) -> None:
        if self.frame_count < 1:
            raise ConfigError("frame_count must be >= 1")
        if not self.identities:
            raise ConfigError("scenario needs at least one identity")
        if self.embedding_dim < 1:
            raise ConfigError("embedding_dim must be >= 1")
        if not 0.0 < self.identity_separation <= 180.0:
            raise ConfigError("identity_separation must be in (0, 180] degrees")
        if self.noise_sigma < 0.0:
            raise ConfigError("noise_sigma must be >= 0")
        if self.gt_during_occlusion not in GT_OCCLUSION_MODES:
            raise ConfigError(f"gt_during_occlusion must be one of {GT_OCCLUSION_MODES}")
        missing = set(QUALITY_STATES) - set(self.quality_profile)
        if missing:
            raise ConfigError(f"quality profile lacks states {sorted(missing)}")
        names = [spec.name for spec in self.identities]
        if len(set(names)) != len(names):
            raise ConfigError("identity names must be unique")
        for spec in self.identities:
            self._check_identity(spec)

    def _check_identity(self, spec: IdentitySpec) -> None:
        exit_ = self.exit_of(spec)
        if not 0 <= spec.enter < exit_ <= self.frame_count:
            raise ConfigError(f"{spec.name}: need 0 <= enter < exit <= frame_count")
        if spec.passes < 1 or spec.gap < 0:
            raise ConfigError(f"{spec.name}: passes must be >= 1 and gap >= 0")
        if self.pass_length(spec) < 1:
            raise ConfigError(f"{spec.name}: passes and gaps do not fit between enter and exit")
        if spec.size[0] <= 0 or spec.size[1] <= 0:
            raise ConfigError(f"{spec.name}: box size must be positive")
        for start, end in spec.occlusions:
            if not 0 <= start < end <= self.frame_count:
                raise ConfigError(f"{spec.name}: occlusion window [{start}, {end}) outside [0, {self.frame_count})")
        states = [spec.quality, *(w.state for w in spec.quality_windows)]
        for state in states:
            if state not in QUALITY_STATES:
                raise ConfigError(f"{spec.name}: unknown quality state {state!r}")
        if spec.reappear_discarded < 0:
            raise ConfigError(f"{spec.name}: reappear_discarded must be >= 0")

    @property
    def num_identities(self) -> int:
        return len(self.identities)

    def exit_of(self, spec: IdentitySpec) -> int:
        return self.frame_count if spec.exit is None else spec.exit

    def pass_length(self, spec: IdentitySpec) -> int:
        span = self.exit_of(spec) - spec.enter
        return (span - spec.gap * (spec.passes - 1)) // spec.passes

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ScenarioConfig:
        try:
            profile = dict(DEFAULT_QUALITY_PROFILE)
            for state, ranges in (data.get("quality_profile") or {}).items():
                profile[state] = QualityRanges(
                    confidence=_pair(ranges["confidence"]),
                    angle=_pair(ranges["angle"]),
                    blur=_pair(ranges["blur"]),
                )
            return cls(
                frame_count=int(data["frame_count"]),
                identities=tuple(IdentitySpec.from_dict(d) for d in data["identities"]),
                arena=tuple(int(v) for v in data.get("arena", (1920, 1080))),  # type: ignore[arg-type]
                embedding_dim=int(data.get("embedding_dim", 512)),
                identity_separation=float(data.get("identity_separation", 60.0)),
                noise_sigma=float(data.get("noise_sigma", 0.01)),
                gt_during_occlusion=str(data.get("gt_during_occlusion", "suspended")),
                quality_profile=profile,
                seed=int(data.get("seed", 0)),
                name=str(data.get("name", "scenario")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid scenario config: {exc}") from exc

    def as_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "seed": self.seed,
            "frame_count": self.frame_count,
            "arena": list(self.arena),
            "embedding_dim": self.embedding_dim,
            "identity_separation": self.identity_separation,
            "noise_sigma": self.noise_sigma,
            "gt_during_occlusion": self.gt_during_occlusion,
            "quality_profile": {
                state: {"confidence": list(r.confidence), "angle": list(r.angle), "blur": list(r.blur)}
                for state, r in self.quality_profile.items()
            },
            "identities": [spec.as_dict() for spec in self.identities],
        }


def load_scenario(path: str | Path) -> ScenarioConfig:
    try:
        with open(path, "rb") as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"scenario file {path} is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"scenario file {path} must hold a mapping")
    return ScenarioConfig.from_dict(data)


def dump_scenario(config: ScenarioConfig) -> str:
    return yaml.safe_dump(config.as_dict(), sort_keys=False)


# ----------------------------------------------------------------------
# Identity embeddings
# ----------------------------------------------------------------------


def identity_bases(n: int, dim: int, separation_deg: float, rng: np.random.Generator) -> np.ndarray:
    """``n`` unit vectors whose pairwise cosine is at most ``cos(separation)``.

    Orthonormal up to ``dim`` identities, a regular simplex for obtuse
    separations, greedy rejection packing otherwise.
    """
    cos_max = math.cos(math.radians(separation_deg))
    if n == 1:
        return normalize(rng.standard_normal(dim))[None, :]
    if separation_deg <= 90.0 and n <= dim:
        q, _ = np.linalg.qr(rng.standard_normal((dim, n)))
        return q.T.copy()
    if separation_deg > 90.0:
        simplex_cos = -1.0 / (n - 1)
        if n > dim + 1 or simplex_cos > cos_max + 1e-12:
            raise ConfigError(
                f"cannot place {n} identities {separation_deg} degrees apart in {dim} dimensions"
            )
        centred = np.eye(n) - 1.0 / n
        u, s, _ = np.linalg.svd(centred)
        coords = u[:, : n - 1] * s[: n - 1]
        rotation, _ = np.linalg.qr(rng.standard_normal((dim, n - 1)))
        bases = coords @ rotation.T
        return bases / np.linalg.norm(bases, axis=1, keepdims=True)
    accepted: list[np.ndarray] = []
    for _ in range(PACKING_ATTEMPTS):
        candidate = normalize(rng.standard_normal(dim))
        if all(float(candidate @ b) <= cos_max for b in accepted):
            accepted.append(candidate)
            if len(accepted) == n:
                return np.stack(accepted)
    raise ConfigError(
        f"could not pack {n} identities {separation_deg} degrees apart in {dim} dimensions"
    )


# ----------------------------------------------------------------------
# Generation
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class _FrameState:
    visible: bool
    present: bool  # in the scene, visible or occluded
    box: Optional[BBox] = None
    quality_state: str = "enrollable"


def _occluded(spec: IdentitySpec, frame: int) -> bool:
    return any(start <= frame < end for start, end in spec.occlusions)


def identity_timeline(config: ScenarioConfig, spec: IdentitySpec) -> list[_FrameState]:
    pass_len = config.pass_length(spec)
    period = pass_len + spec.gap
    timeline: list[_FrameState] = []
    seen = False
    since_reappear: Optional[int] = None  # visible frames since the last absence, once seen
    for frame in range(config.frame_count):
        offset = frame - spec.enter
        in_range = 0 <= offset and frame < config.exit_of(spec)
        pass_index, local = divmod(offset, period) if in_range else (0, 0)
        present = in_range and pass_index < spec.passes and local < pass_len
        box = None
        if present:
            box = BBox(
                spec.start[0] + spec.velocity[0] * local,
                spec.start[1] + spec.velocity[1] * local,
                spec.size[0],
                spec.size[1],
            )
        if not present or _occluded(spec, frame):
            timeline.append(_FrameState(visible=False, present=present, box=box))
            if seen:
                since_reappear = 0
            continue
        state = spec.quality
        for window in spec.quality_windows:
            if window.start <= frame < window.end:
                state = window.state
        if since_reappear is not None:
            if since_reappear < spec.reappear_discarded:
                state = "discarded"
            since_reappear += 1
        seen = True
        timeline.append(_FrameState(visible=True, present=True, box=box, quality_state=state))
    return timeline


def generate(config: ScenarioConfig) -> tuple[list[DetectionRecord], GroundTruth]:
    bases = identity_bases(
        config.num_identities,
        config.embedding_dim,
        config.identity_separation,
        np.random.default_rng([config.seed, 0]),
    )
    timelines = [identity_timeline(config, spec) for spec in config.identities]
    rngs = [np.random.default_rng([config.seed, 1, i]) for i in range(config.num_identities)]

    records: list[DetectionRecord] = []
    entries: list[GroundTruthEntry] = []
    for frame in range(config.frame_count):
        det_id = 0
        for index, spec in enumerate(config.identities):
            state = timelines[index][frame]
            if not state.present:
                continue
            assert state.box is not None
            if state.visible or config.gt_during_occlusion == "annotated":
                entries.append(GroundTruthEntry(frame=frame, identity=spec.name, box=state.box))
            if not state.visible:
                continue
            rng = rngs[index]
            quality = config.quality_profile[state.quality_state].sample(rng)
            noise = rng.normal(0.0, config.noise_sigma, size=config.embedding_dim)
            records.append(
                DetectionRecord(
                    frame=frame,
                    det_id=det_id,
                    box=state.box,
                    quality=quality,
                    embedding=normalize(bases[index] + noise),
                )
            )
            det_id += 1
    logger.info(
        "scenario_generated name=%s identities=%s frames=%s detections=%s",
        config.name,
        config.num_identities,
        config.frame_count,
        len(records),
    )
    return records, GroundTruth(entries=entries)


def expected_track_count(config: ScenarioConfig) -> int:
    """Track IDs an ideal tracker with perfect association would emit: one per visible identity."""
    return sum(
        1 for spec in config.identities if any(s.visible for s in identity_timeline(config, spec))
    )


def random_scenario(
    seed: int,
    max_identities: int = 5,
    max_frames: int = 50,
    embedding_dim: int = 64,
) -> ScenarioConfig:
    """A random but valid scenario: lanes, dropouts, re-entries and quality changes."""
    rng = np.random.default_rng(seed)
    frame_count = int(rng.integers(max(10, max_frames // 2), max_frames + 1))
    num_identities = int(rng.integers(1, max_identities + 1))
    identities = []
    for i in range(num_identities):
        enter = int(rng.integers(0, frame_count // 3))
        passes = int(rng.integers(1, 3))
        gap = int(rng.integers(0, 8)) if passes > 1 else 0
        span = frame_count - enter
        if span - gap * (passes - 1) < passes:
            passes, gap = 1, 0
        occlusions = []
        if rng.random() < 0.5:
            start = int(rng.integers(enter, frame_count))
            occlusions.append((start, min(frame_count, start + int(rng.integers(1, 15)))))
        windows = []
        if rng.random() < 0.5:
            start = int(rng.integers(0, frame_count))
            windows.append(
                QualityWindow(start, min(frame_count, start + int(rng.integers(1, 10))), str(rng.choice(QUALITY_STATES)))
            )
        identities.append(
            IdentitySpec(
                name=f"id{i}",
                start=(60.0 + 140.0 * i, float(rng.integers(0, 200))),
                velocity=(float(rng.uniform(-2.0, 2.0)), float(rng.uniform(0.0, 4.0))),
                enter=enter,
                passes=passes,
                gap=gap,
                occlusions=tuple(occlusions),
                quality=str(rng.choice(QUALITY_STATES[:2])),
                quality_windows=tuple(windows),
                reappear_discarded=int(rng.integers(0, 3)),
            )
        )
    return ScenarioConfig(
        frame_count=frame_count,
        identities=tuple(identities),
        embedding_dim=embedding_dim,
        identity_separation=60.0,
        noise_sigma=0.03,
        seed=seed,
        name=f"random-{seed}",
    )
