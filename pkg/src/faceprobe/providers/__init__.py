"""Recognizer backends: simulated, record/replay cassette, and live HTTP."""

from .base import RecognizerBackend
from .cassette import Cassette, CassetteEntry, CassetteRecorder, RecordingBackend, ReplayBackend, load_cassette
from .live import LiveBackend, LiveEndpoint, LiveProviderConfig, RequestsTransport, TransportResponse
from .simulated import (
    DEFAULT_FIDELITY,
    GalleryEntry,
    ProviderProfile,
    SimulatedBackend,
    build_gallery,
    simulate_latent,
)

__all__ = [
    "RecognizerBackend",
    "Cassette",
    "CassetteEntry",
    "CassetteRecorder",
    "RecordingBackend",
    "ReplayBackend",
    "load_cassette",
    "LiveBackend",
    "LiveEndpoint",
    "LiveProviderConfig",
    "RequestsTransport",
    "TransportResponse",
    "DEFAULT_FIDELITY",
    "GalleryEntry",
    "ProviderProfile",
    "SimulatedBackend",
    "build_gallery",
    "simulate_latent",
]
