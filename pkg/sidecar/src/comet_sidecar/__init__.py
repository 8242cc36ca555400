"""Local HTTP sidecar serving segment-level translation-quality scores."""

from .app import ScoreItem, create_app
from .backends import DEFAULT_MODEL_ID, CometBackend, EmbeddingSimilarityBackend, backend_for

__version__ = "0.1.0"

__all__ = [
    "CometBackend",
    "DEFAULT_MODEL_ID",
    "EmbeddingSimilarityBackend",
    "ScoreItem",
    "backend_for",
    "create_app",
]
