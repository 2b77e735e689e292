"""Offline mpox screening toolkit: MSLW model containers, a numpy
inference engine, dataset tooling, the evaluation battery, and a
loopback screening service."""

__version__ = "0.1.0"

from .model_io import (
    EnvelopeReport,
    ModelContainer,
    ModelMetadata,
    load_model,
    save_model,
    validate_envelope,
)
from .screening import ScreeningResult, screen_image, triage_rule

__all__ = [
    "__version__",
    "EnvelopeReport", "ModelContainer", "ModelMetadata",
    "load_model", "save_model", "validate_envelope",
    "ScreeningResult", "screen_image", "triage_rule",
]
