from __future__ import annotations

from typing import Callable

from facetrack.services.synth import IdentitySpec, QualityWindow, ScenarioConfig

FIXTURE_ORDER = ["FIG3", "NO-ENROLL", "REENTRY", "CROSSOVER", "CROWD"]

FALL_SPEED = 3.0  # px per frame, downwards
LANE_PITCH = 140.0
LANE_OFFSET = 60.0


def _lane(index: int) -> float:
    return LANE_OFFSET + LANE_PITCH * index


def fig3(seed: int = 0) -> ScenarioConfig:
    """One subject, enrollable faces before an occlusion longer than T_max, verifiable after it."""
    return ScenarioConfig(
        name="FIG3",
        seed=seed,
        frame_count=80,
        identities=(
            IdentitySpec(
                name="subject",
                start=(400.0, 100.0),
                velocity=(0.0, FALL_SPEED),
                occlusions=((30, 45),),
                quality="verifiable",
                quality_windows=(QualityWindow(0, 30, "enrollable"),),
                reappear_discarded=3,
            ),
        ),
    )


def no_enroll(seed: int = 0) -> ScenarioConfig:
    """As FIG3, but no face before the occlusion is good enough to enroll."""
    return ScenarioConfig(
        name="NO-ENROLL",
        seed=seed,
        frame_count=80,
        identities=(
            IdentitySpec(
                name="subject",
                start=(400.0, 100.0),
                velocity=(0.0, FALL_SPEED),
                occlusions=((30, 45),),
                quality="verifiable",
                reappear_discarded=3,
            ),
        ),
    )


def reentry(seed: int = 0) -> ScenarioConfig:
    """Three subjects that leave and re-enter the scene twice, with short dropouts in every pass."""
    pass_len, gap = 40, 30
    period = pass_len + gap
    identities = []
    for i in range(3):
        dropouts = tuple((p * period + 12 + 4 * i, p * period + 14 + 4 * i) for p in range(3))
        identities.append(
            IdentitySpec(
                name=f"subject{i}",
                start=(200.0 + 400.0 * i, 80.0),
                velocity=(0.0, FALL_SPEED),
                passes=3,
                gap=gap,
                occlusions=dropouts,
                quality="enrollable",
                reappear_discarded=3,
            )
        )
    return ScenarioConfig(
        name="REENTRY",
        seed=seed,
        frame_count=3 * pass_len + 2 * gap,
        identities=tuple(identities),
    )


def crossover(seed: int = 0) -> ScenarioConfig:
    """Two subjects walking towards each other on the same row; their boxes cross."""
    return ScenarioConfig(
        name="CROSSOVER",
        seed=seed,
        frame_count=120,
        identities=(
            IdentitySpec(name="left", start=(100.0, 300.0), velocity=(5.0, 0.0)),
            # speeds differ so the boxes never coincide exactly
            IdentitySpec(name="right", start=(700.0, 300.0), velocity=(-4.0, 0.0)),
        ),
    )


def crowd(seed: int = 0) -> ScenarioConfig:
    """Thirteen subjects in parallel lanes: about 13 faces per frame, every subject
    drops out briefly and every third one is occluded for longer than T_max."""
    identities = []
    for i in range(13):
        occlusions = [(20 + 3 * i, 22 + 3 * i)]
        if i % 3 == 0:
            occlusions.append((70, 95))
        identities.append(
            IdentitySpec(
                name=f"subject{i:02d}",
                start=(_lane(i), 80.0),
                velocity=(0.0, FALL_SPEED),
                occlusions=tuple(occlusions),
                quality="verifiable",
                quality_windows=(QualityWindow(0, 5, "enrollable"),),
                reappear_discarded=3,
            )
        )
    return ScenarioConfig(name="CROWD", seed=seed, frame_count=120, identities=tuple(identities))


def long_gap(seed: int, num_identities: int = 4, gap: int = 20) -> ScenarioConfig:
    """Subjects that all disappear for ``gap`` frames halfway through and come back."""
    occlusion = (30, 30 + gap)
    identities = tuple(
        IdentitySpec(
            name=f"subject{i}",
            start=(_lane(i), 60.0),
            velocity=(0.0, FALL_SPEED),
            occlusions=(occlusion,),
            quality="verifiable",
            quality_windows=(QualityWindow(0, 10, "enrollable"),),
            reappear_discarded=2,
        )
        for i in range(num_identities)
    )
    return ScenarioConfig(
        name=f"LONG-GAP-{seed}",
        seed=seed,
        frame_count=occlusion[1] + 30,
        identities=identities,
        identity_separation=60.0,
    )


FIXTURES: dict[str, Callable[[int], ScenarioConfig]] = {
    "FIG3": fig3,
    "NO-ENROLL": no_enroll,
    "REENTRY": reentry,
    "CROSSOVER": crossover,
    "CROWD": crowd,
}


def scripted_fixtures(seed: int = 0) -> dict[str, ScenarioConfig]:
    return {name: FIXTURES[name](seed) for name in FIXTURE_ORDER}
