import io
import math

import numpy as np
import pytest

from facetrack.config import ConfigError
from facetrack.services.core_model import similarity
from facetrack.services.fbtr import QualityClass, QualityGates, classify
from facetrack.services.ingest import parse_detections, parse_ground_truth, write_detections, write_ground_truth
from facetrack.services.synth import (
    IdentitySpec,
    QualityWindow,
    ScenarioConfig,
    dump_scenario,
    expected_track_count,
    generate,
    identity_bases,
    identity_timeline,
    load_scenario,
    random_scenario,
)


def _walker(**kwargs):
    values = dict(name="w", start=(100.0, 100.0), velocity=(2.0, 0.0))
    values.update(kwargs)
    return IdentitySpec(**values)


def _scenario(*identities, frame_count=20, **kwargs):
    return ScenarioConfig(frame_count=frame_count, identities=tuple(identities), embedding_dim=16, **kwargs)


def test_generation_is_deterministic():
    config = random_scenario(7)
    first_records, first_gt = generate(config)
    again_records, again_gt = generate(config)
    assert first_records == again_records
    assert all(np.array_equal(a.embedding, b.embedding) for a, b in zip(first_records, again_records))
    assert first_gt == again_gt


def test_seed_changes_embeddings_not_geometry():
    config = _scenario(_walker())
    moved = ScenarioConfig(**{**config.__dict__, "seed": 1})
    a, _ = generate(config)
    b, _ = generate(moved)
    assert [r.box for r in a] == [r.box for r in b]
    assert not np.array_equal(a[0].embedding, b[0].embedding)


def test_trajectory_and_counts():
    records, gt = generate(_scenario(_walker(), _walker(name="v", start=(400.0, 100.0))))
    assert len(records) == 40
    assert gt.num_dets == 40
    first = [r for r in records if r.frame == 5]
    assert first[0].box.as_tuple() == (110.0, 100.0, 60.0, 60.0)
    assert [r.det_id for r in first] == [0, 1]


def test_occlusion_window_is_half_open():
    spec = _walker(occlusions=((5, 8),))
    timeline = identity_timeline(_scenario(spec), spec)
    assert [s.visible for s in timeline[4:9]] == [True, False, False, False, True]


def test_gt_during_occlusion_modes():
    spec = _walker(occlusions=((5, 8),))
    _, suspended = generate(_scenario(spec))
    _, annotated = generate(_scenario(spec, gt_during_occlusion="annotated"))
    assert suspended.num_dets == 17
    assert annotated.num_dets == 20


def test_passes_restart_trajectory():
    spec = _walker(passes=2, gap=4)
    timeline = identity_timeline(_scenario(spec), spec)
    assert [s.present for s in timeline] == [True] * 8 + [False] * 4 + [True] * 8
    assert timeline[12].box == timeline[0].box


def test_quality_windows_and_reappearance():
    spec = _walker(
        quality="verifiable",
        quality_windows=(QualityWindow(0, 3, "enrollable"),),
        occlusions=((6, 9),),
        reappear_discarded=2,
    )
    states = [s.quality_state for s in identity_timeline(_scenario(spec), spec) if s.visible]
    assert states[:3] == ["enrollable"] * 3
    assert states[3:6] == ["verifiable"] * 3
    assert states[6:8] == ["discarded"] * 2
    assert states[8:] == ["verifiable"] * 9


def test_sampled_qualities_fall_in_their_class():
    gates = QualityGates()
    expected = {"enrollable": QualityClass.ENROLLABLE, "verifiable": QualityClass.VERIFIABLE}
    for state, quality_class in expected.items():
        records, _ = generate(_scenario(_walker(quality=state), frame_count=200))
        assert {classify(r.quality, gates) for r in records} == {quality_class}


def test_orthogonal_bases_without_noise():
    spec_a, spec_b = _walker(), _walker(name="v", start=(400.0, 100.0))
    records, _ = generate(_scenario(spec_a, spec_b, noise_sigma=0.0, identity_separation=90.0))
    a = [r.embedding for r in records if r.det_id == 0]
    b = [r.embedding for r in records if r.det_id == 1]
    assert similarity(a[0], a[5]) == pytest.approx(1.0)
    assert similarity(a[0], b[0]) == pytest.approx(0.0, abs=1e-12)


def test_bases_respect_separation():
    rng = np.random.default_rng(3)
    for n, dim, sep in [(5, 16, 60.0), (20, 8, 60.0), (4, 16, 109.0)]:
        bases = identity_bases(n, dim, sep, rng)
        assert bases.shape == (n, dim)
        assert np.allclose(np.linalg.norm(bases, axis=1), 1.0)
        gram = bases @ bases.T
        off = gram[~np.eye(n, dtype=bool)]
        assert off.max() <= math.cos(math.radians(sep)) + 1e-9


def test_simplex_is_regular():
    bases = identity_bases(4, 8, 109.0, np.random.default_rng(0))
    off = (bases @ bases.T)[~np.eye(4, dtype=bool)]
    assert off == pytest.approx(np.full(12, -1.0 / 3.0))


def test_infeasible_separation_is_a_config_error():
    with pytest.raises(ConfigError):
        identity_bases(5, 16, 150.0, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        identity_bases(4, 2, 100.0, np.random.default_rng(0))


def test_self_similarity_with_default_noise():
    config = ScenarioConfig(frame_count=30, identities=(_walker(),))
    records, _ = generate(config)
    sims = [similarity(records[0].embedding, r.embedding) for r in records[1:]]
    assert min(sims) >= 0.9


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(frame_count=0),
        dict(noise_sigma=-0.1),
        dict(identity_separation=0.0),
        dict(gt_during_occlusion="sometimes"),
    ],
)
def test_config_validation(kwargs):
    values = dict(frame_count=10, identities=(_walker(),))
    values.update(kwargs)
    with pytest.raises(ConfigError):
        ScenarioConfig(**values)


@pytest.mark.parametrize(
    "spec",
    [
        _walker(enter=12),
        _walker(occlusions=((5, 40),)),
        _walker(quality="blurry"),
        _walker(passes=4, gap=5),
    ],
)
def test_identity_validation(spec):
    with pytest.raises(ConfigError):
        ScenarioConfig(frame_count=10, identities=(spec,))


def test_duplicate_names_rejected():
    with pytest.raises(ConfigError):
        ScenarioConfig(frame_count=10, identities=(_walker(), _walker()))


def test_scenario_yaml_round_trip(tmp_path):
    config = random_scenario(11)
    path = tmp_path / "scenario.yaml"
    path.write_text(dump_scenario(config), encoding="utf-8")
    assert load_scenario(path) == config


def test_load_rejects_non_mapping(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_bytes(b"name: \xff\xfe\n")
    with pytest.raises(ConfigError):
        load_scenario(path)
    path.write_text("name: [unclosed\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_scenario(path)
    path.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_scenario(path)
    path.write_text("frame_count: 10\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_scenario(path)


@pytest.mark.parametrize("seed", range(20))
def test_random_scenarios_are_valid_input(seed):
    config = random_scenario(seed)
    records, gt = generate(config)
    det_sink, gt_sink = io.BytesIO(), io.BytesIO()
    write_detections(records, det_sink)
    write_ground_truth(gt, gt_sink)
    assert parse_detections(io.BytesIO(det_sink.getvalue()), embedding_dim=config.embedding_dim) == records
    assert parse_ground_truth(io.BytesIO(gt_sink.getvalue())).num_dets == gt.num_dets


def test_expected_track_count():
    hidden = _walker(name="hidden", occlusions=((0, 20),))
    config = _scenario(_walker(), hidden)
    assert expected_track_count(config) == 1
