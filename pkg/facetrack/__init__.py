"""Long-term multi-face tracking over pre-extracted detection streams."""

__version__ = "0.3.0"


class FaceTrackError(Exception):
    pass
