"""Defense gateway: detector ensembles filtering probes before they reach
the recognizer.

Three admission policies:

* DD1: a single detector; admit when its fake-probability is below the
  decision threshold.
* DD2: three detectors AND-gated: admit only when all three call the
  probe real.
* DD3: three detectors combined by a trained stacking scorer over the
  scores plus image statistics.

The gateway fails closed: a probe whose detectors error out is blocked and
flagged, never forwarded on a fabricated score. Blocked probes are
answered as "no celebrity" on the provider's behalf so every metric keeps
its denominator.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .campaign import EPOCH, CampaignConfig, CampaignMode, run_campaign
from .combiner import CombinerModel
from .detectors import DetectorChannel, DetectorScore, hashed_image_stats
from .errors import DetectorError, ValidationError
from .manifest import DatasetManifest
from .model import DEFENSE_BLOCKED, Prediction, ProbeImage, QueryRecord, RequestKind
from .pricing import PricingSchedule
from .providers.base import RecognizerBackend

FeatureExtractor = Callable[[ProbeImage], Sequence[float]]


class DefenseMode(enum.Enum):
    DD1 = "dd1"
    DD2 = "dd2"
    DD3 = "dd3"


class Decision(enum.Enum):
    ADMIT = "admit"
    BLOCK = "block"


_DETECTOR_COUNT = {DefenseMode.DD1: 1, DefenseMode.DD2: 3, DefenseMode.DD3: 3}


@dataclass(frozen=True)
class DefensePolicy:
    mode: DefenseMode
    detector_ids: tuple[str, ...]
    decision_threshold: float = 0.5
    combiner: CombinerModel | None = None

    def __post_init__(self):
        expected = _DETECTOR_COUNT[self.mode]
        if len(self.detector_ids) != expected:
            raise ValidationError(
                f"{self.mode.value} requires exactly {expected} detectors, "
                f"got {len(self.detector_ids)}"
            )
        if not 0.0 <= self.decision_threshold <= 1.0:
            raise ValidationError("decision_threshold outside [0, 1]")
        if self.mode is DefenseMode.DD3 and self.combiner is None:
            raise ValidationError("dd3 requires a trained combiner")


@dataclass(frozen=True)
class DefenseEntry:
    probe_id: str
    scores: tuple[DetectorScore, ...]
    decision: Decision
    rule: str
    combined_p: float | None = None


def score_probe(channel: DetectorChannel, probe: ProbeImage) -> DetectorScore:
    """One detector's verdict for one probe. Protocol violations, timeouts,
    and crashes raise; they never turn into a fabricated score."""
    return channel.score(probe)


def dd1_admit(score: DetectorScore, threshold: float) -> Decision:
    """A score at or above the threshold counts as fake and blocks."""
    return Decision.ADMIT if score.p_fake < threshold else Decision.BLOCK


def dd2_admit(scores: Sequence[DetectorScore], threshold: float) -> Decision:
    """Admit only when all three detectors classify the probe as real."""
    if len(scores) != 3:
        raise ValidationError(f"dd2 takes exactly 3 scores, got {len(scores)}")
    if all(s.p_fake < threshold for s in scores):
        return Decision.ADMIT
    return Decision.BLOCK


def dd3_combined(
    scores: Sequence[DetectorScore],
    aux_features: Sequence[float],
    combiner: CombinerModel,
) -> float:
    """Stacked fake-probability over [scores..., image statistics...]."""
    features = [s.p_fake for s in scores] + list(aux_features)
    return combiner.score_one(features)


def decide_probe(
    policy: DefensePolicy,
    channels: Sequence[DetectorChannel],
    probe: ProbeImage,
    feature_extractor: FeatureExtractor = hashed_image_stats,
) -> DefenseEntry:
    scores: list[DetectorScore] = []
    for channel in channels:
        try:
            scores.append(score_probe(channel, probe))
        except DetectorError:
            # Reject-closed: an unscored probe is treated as fake, with a
            # rule that keeps it distinguishable from a scored block.
            return DefenseEntry(
                probe_id=probe.probe_id,
                scores=tuple(scores),
                decision=Decision.BLOCK,
                rule="defense_unscored",
            )
    if policy.mode is DefenseMode.DD1:
        decision = dd1_admit(scores[0], policy.decision_threshold)
        return DefenseEntry(probe.probe_id, tuple(scores), decision, "dd1")
    if policy.mode is DefenseMode.DD2:
        decision = dd2_admit(scores, policy.decision_threshold)
        return DefenseEntry(probe.probe_id, tuple(scores), decision, "dd2")
    combined = dd3_combined(scores, feature_extractor(probe), policy.combiner)
    decision = Decision.ADMIT if combined < policy.decision_threshold else Decision.BLOCK
    return DefenseEntry(probe.probe_id, tuple(scores), decision, "dd3", combined_p=combined)


def defended_campaign(
    manifest: DatasetManifest,
    backends: Mapping[str, RecognizerBackend],
    policy: DefensePolicy,
    config: CampaignConfig,
    channels: Sequence[DetectorChannel],
    pricing: PricingSchedule | None = None,
    feature_extractor: FeatureExtractor = hashed_image_stats,
) -> tuple[list[QueryRecord], list[DefenseEntry]]:
    """Filter every probe through the detectors, then run the campaign over
    the admitted ones. Blocked probes receive synthetic no-match records
    (skip_reason defense_blocked) for every provider, at zero cost."""
    if len(channels) != len(policy.detector_ids):
        raise ValidationError(
            f"policy names {len(policy.detector_ids)} detectors but "
            f"{len(channels)} channels were supplied"
        )
    defense_log: list[DefenseEntry] = []
    admitted: set[str] = set()
    blocked: list[ProbeImage] = []
    for probe in sorted(manifest.probes, key=lambda p: p.probe_id):
        entry = decide_probe(policy, channels, probe, feature_extractor)
        defense_log.append(entry)
        if entry.decision is Decision.ADMIT:
            admitted.add(probe.probe_id)
        else:
            blocked.append(probe)

    records = run_campaign(manifest, backends, config, pricing, admitted=admitted)
    for probe in blocked:
        for provider_id in config.provider_ids:
            records.append(QueryRecord(
                probe_id=probe.probe_id,
                provider_id=provider_id,
                request_kind=RequestKind.CR,
                prediction=Prediction(None),
                skip_reason=DEFENSE_BLOCKED,
                timestamp=EPOCH,
            ))
    if config.mode is not CampaignMode.LIVE:
        records.sort(key=lambda r: (r.provider_id, r.probe_id, r.request_kind.value))
    else:
        records.sort(key=lambda r: r.timestamp)
    return records, defense_log


def updated_success_rate(raw_rate: float, detector_fnr: float) -> float:
    """Closed-form defended rate: only fakes the detector misses (rate
    ``detector_fnr``) still reach the recognizer, where they succeed at the
    raw rate."""
    for value, label in ((raw_rate, "raw_rate"), (detector_fnr, "detector_fnr")):
        if not 0.0 <= value <= 1.0:
            raise ValidationError(f"{label} {value} outside [0, 1]")
    return raw_rate * detector_fnr
