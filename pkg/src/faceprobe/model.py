"""Core domain types: identities, probes, predictions, query records.

Everything here is immutable after construction and safe to share across
threads. Validation happens in ``__post_init__``; an out-of-range value is
always an error, never silently clamped.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal

from .errors import ValidationError


class Demographic(enum.Enum):
    WHITE = "White"
    ASIAN = "Asian"
    BLACK = "Black"
    HISPANIC = "Hispanic"
    ASIAN_INDIAN = "AsianIndian"
    MULTIRACIAL = "Multiracial"
    UNKNOWN = "Unknown"


class ProbeKind(enum.Enum):
    REAL = "Real"
    FAKE = "Fake"


class GenMethod(enum.Enum):
    REPLACEMENT = "Replacement"
    REENACTMENT = "Reenactment"
    SYNTHESIS = "Synthesis"
    NOT_APPLICABLE = "NotApplicable"


class RequestKind(enum.Enum):
    CR = "CR"  # celebrity recognition
    FS = "FS"  # face similarity


@dataclass(frozen=True, slots=True)
class IdentityRef:
    """A celebrity identity. Equality and hashing use the canonical name only."""

    canonical_name: str
    demographic_tag: Demographic = field(default=Demographic.UNKNOWN, compare=False)

    def __post_init__(self):
        if not self.canonical_name:
            raise ValidationError("identity canonical_name must be non-empty")
        if self.canonical_name != _normalize_name(self.canonical_name):
            raise ValidationError(
                f"identity name {self.canonical_name!r} is not in canonical form"
            )


def _normalize_name(raw: str) -> str:
    return " ".join(raw.casefold().split())


def normalize_identity(raw_name: str, demographic: Demographic = Demographic.UNKNOWN) -> IdentityRef:
    """Build an IdentityRef from a free-form provider or manifest name.

    Case-folds, trims, and collapses internal whitespace; idempotent.
    """
    if not raw_name:
        raise ValidationError("identity name must be non-empty")
    canonical = _normalize_name(raw_name)
    if not canonical:
        raise ValidationError(f"identity name {raw_name!r} is empty after normalization")
    return IdentityRef(canonical, demographic)


@dataclass(frozen=True, slots=True)
class ProbeImage:
    """One image under test. Carries a content locator, never pixels.

    Identity roles: ``target`` is the victim the fake impersonates,
    ``reference`` the driving identity (``reference``/``reference2`` are the
    two blended identities for Synthesis fakes, which have no target).
    """

    probe_id: str
    uri: str
    kind: ProbeKind
    method: GenMethod
    dataset_id: str
    target: IdentityRef | None = None
    reference: IdentityRef | None = None
    reference2: IdentityRef | None = None
    source_video_id: str | None = None
    no_real_reference: bool = False

    def __post_init__(self):
        rules = probe_violations(
            self.kind, self.method,
            self.target is not None,
            self.reference is not None,
            self.reference2 is not None,
        )
        if not self.probe_id:
            rules = ["probe_id must be non-empty", *rules]
        if not self.dataset_id:
            rules = ["dataset_id must be non-empty", *rules]
        if rules:
            raise ValidationError(f"probe {self.probe_id!r}: " + "; ".join(rules))

    @property
    def is_fake(self) -> bool:
        return self.kind is ProbeKind.FAKE


def probe_violations(
    kind: ProbeKind,
    method: GenMethod,
    has_target: bool,
    has_reference: bool,
    has_reference2: bool,
) -> list[str]:
    """Return the list of violated kind/method/field-presence rules.

    Empty list means the combination is one of the three valid arms:
    Real probes; Replacement/Reenactment fakes; Synthesis fakes.
    """
    rules: list[str] = []
    if kind is ProbeKind.REAL:
        if method is not GenMethod.NOT_APPLICABLE:
            rules.append("real probe must have method NotApplicable")
        if not has_target:
            rules.append("real probe must carry a target identity")
        if has_reference:
            rules.append("real probe must not carry a reference identity")
        if has_reference2:
            rules.append("real probe must not carry a reference2 identity")
        return rules
    # fake
    if method is GenMethod.NOT_APPLICABLE:
        rules.append("fake probe must carry a concrete generation method")
    elif method is GenMethod.SYNTHESIS:
        if has_target:
            rules.append("synthesis fake must not carry a target identity")
        if not has_reference:
            rules.append("synthesis fake must carry a reference identity")
        if not has_reference2:
            rules.append("synthesis fake must carry a reference2 identity")
    else:  # replacement / reenactment
        if not has_target:
            rules.append(f"{method.value.lower()} fake must carry a target identity")
        if not has_reference:
            rules.append(f"{method.value.lower()} fake must carry a reference identity")
        if has_reference2:
            rules.append(f"{method.value.lower()} fake must not carry a reference2 identity")
    return rules


def subject_identity(probe: ProbeImage) -> IdentityRef | None:
    """The identity this probe depicts: target when present, else reference."""
    return probe.target if probe.target is not None else probe.reference


@dataclass(frozen=True, slots=True)
class Match:
    name: IdentityRef
    confidence: float  # percent

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 100.0:
            raise ValidationError(f"confidence {self.confidence} outside [0, 100]")


@dataclass(frozen=True, slots=True)
class Prediction:
    """Recognizer output: a (name, confidence) match, or no match at all."""

    match: Match | None = None

    @property
    def recognized(self) -> bool:
        return self.match is not None

    @property
    def confidence(self) -> float:
        """Confidence in percent; an absent match compares as 0."""
        return self.match.confidence if self.match else 0.0


NO_MATCH = Prediction(None)

# skip_reason code for probes the defense gateway refused to forward;
# these records still count as unrecognized fakes in every metric.
DEFENSE_BLOCKED = "defense_blocked"


@dataclass(frozen=True, slots=True)
class QueryRecord:
    """Outcome of one request against one provider (one query-log line)."""

    probe_id: str
    provider_id: str
    request_kind: RequestKind
    prediction: Prediction = NO_MATCH
    similarity: float | None = None  # percent, FS records only
    latency_ms: float = 0.0
    unit_cost: Decimal = Decimal("0")
    skip_reason: str | None = None
    timestamp: datetime = datetime(1970, 1, 1, tzinfo=timezone.utc)

    def __post_init__(self):
        if self.similarity is not None and not 0.0 <= self.similarity <= 100.0:
            raise ValidationError(f"similarity {self.similarity} outside [0, 100]")
        if self.latency_ms < 0:
            raise ValidationError("latency_ms must be nonnegative")
        if self.timestamp.tzinfo is None:
            raise ValidationError("timestamp must be timezone-aware (UTC)")

    @property
    def is_skip(self) -> bool:
        """True for records that never produced a provider outcome.

        defense_blocked is not a skip: it is the gateway answering
        "non-celebrity" on the provider's behalf.
        """
        return self.skip_reason is not None and self.skip_reason != DEFENSE_BLOCKED


@dataclass(frozen=True, slots=True)
class MetricConfig:
    """Thresholds for the high-confidence and high-similarity metrics."""

    beta: float = 90.0
    gamma: float = 80.0

    def __post_init__(self):
        if not 0.0 <= self.beta <= 100.0:
            raise ValidationError(f"beta {self.beta} outside [0, 100]")
        if not 0.0 <= self.gamma <= 100.0:
            raise ValidationError(f"gamma {self.gamma} outside [0, 100]")
