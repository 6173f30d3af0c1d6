import pytest

from facetrack.config import ConfigError, Settings, load_settings


def test_defaults():
    assert load_settings() == Settings()


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv("FACETRACK_TMAX", " 25 ")
    monkeypatch.setenv("FACETRACK_PREDICTOR", "HOLD")
    monkeypatch.setenv("FACETRACK_LOG_LEVEL", "debug")
    monkeypatch.setenv("DATABASE_URL", "sqlite:///results.db")
    settings = load_settings()
    assert settings.t_max == 25
    assert settings.predictor == "hold"
    assert settings.log_level == "DEBUG"
    assert settings.database_url == "sqlite:///results.db"


@pytest.mark.parametrize(
    "key,value",
    [
        ("FACETRACK_TMAX", "ten"),
        ("FACETRACK_IOU_THRESHOLD", "high"),
        ("FACETRACK_PREDICTOR", "kalman"),
        ("FACETRACK_LOG_LEVEL", "LOUD"),
        ("FACETRACK_EMBEDDING_DIM", "0"),
        ("FACETRACK_GT_IOU", "1.5"),
    ],
)
def test_invalid_values(monkeypatch, key, value):
    monkeypatch.setenv(key, value)
    with pytest.raises(ConfigError):
        load_settings()


def test_config_error_is_a_value_error():
    assert issubclass(ConfigError, ValueError)


def test_embedding_dimension_is_inferred_unless_set(monkeypatch):
    assert load_settings().embedding_dim is None
    monkeypatch.setenv("FACETRACK_EMBEDDING_DIM", " 128 ")
    assert load_settings().embedding_dim == 128
