"""Exception hierarchy shared across the harness."""

from __future__ import annotations


class FaceprobeError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(FaceprobeError):
    """A domain value violates one of its invariants."""


class ManifestError(FaceprobeError):
    """Manifest could not be loaded; carries one message per violated rule."""

    def __init__(self, violations: list[str] | str):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = violations
        super().__init__("; ".join(violations))


class ProviderError(FaceprobeError):
    """Non-retryable provider failure (bad request, unusable response)."""


class TransientProviderError(ProviderError):
    """Retryable provider failure: network trouble or throttling.

    ``billable`` marks errors that still consumed a provider transaction
    (e.g. a quota rejection that the provider answered).
    """

    def __init__(self, message: str, billable: bool = False):
        self.billable = billable
        super().__init__(message)


class CassetteMissError(ProviderError):
    """Replay lookup had no recorded entry for the exact request key."""


class ProbeUnreadableError(ProviderError):
    """The probe image could not be read; the probe is skipped, not retried."""


class DetectorError(FaceprobeError):
    """Detector plugin failed: crash, timeout, or unreachable process."""


class DetectorProtocolError(DetectorError):
    """Detector plugin sent a line that violates the wire protocol."""


class MetricsError(FaceprobeError):
    """Query log and manifest disagree (unknown probes, duplicate records)."""
