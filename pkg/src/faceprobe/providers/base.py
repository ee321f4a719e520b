"""Backend interface shared by the simulated, replay, and live adapters."""

from __future__ import annotations

from typing import Protocol, runtime_checkable

from ..model import Prediction, ProbeImage


@runtime_checkable
class RecognizerBackend(Protocol):
    """The two provider functions every backend speaks.

    Implementations must be safe to call from multiple threads; rate
    control and retries are the orchestrator's job, not the backend's.
    """

    provider_id: str

    def recognize_celebrity(self, probe: ProbeImage) -> tuple[Prediction, float]:
        """Identify the probe. Returns (prediction, latency_ms); the
        prediction carries no match when the provider declined to name
        a celebrity."""
        ...

    def face_similarity(self, real_probe: ProbeImage, fake_probe: ProbeImage) -> tuple[float, float]:
        """Similarity between the two faces in percent. Returns
        (similarity, latency_ms)."""
        ...
