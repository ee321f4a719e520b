"""Attack-success predicates and the evaluation aggregator.

The four robustness metrics follow strict-inequality rules:

* targeted: the fake is named as its target and the paired real image is
  named the same;
* non-targeted: the fake is named as any celebrity;
* high fidelity: the fake is recognized with strictly higher confidence
  than the paired real image;
* high confidence: recognized with confidence strictly above beta;
* high similarity: not recognized, but face similarity to the paired real
  image strictly above gamma;
* impersonated celebrity: at least one of a celebrity's fakes scores a
  targeted success.

Aggregation is order-independent and mergeable: partials can be built per
log partition and merged, and the result equals aggregating the whole log.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

from .errors import MetricsError
from .manifest import DatasetManifest, pair_fake_with_real
from .model import (
    DEFENSE_BLOCKED,
    Demographic,
    GenMethod,
    IdentityRef,
    MetricConfig,
    ProbeImage,
    ProbeKind,
    QueryRecord,
    RequestKind,
    normalize_identity,
    subject_identity,
)


class NaOutcome(enum.Enum):
    TARGET_MATCH = "target"
    REFERENCE_MATCH = "reference"
    OTHER_CELEBRITY = "other"
    NO_MATCH = "none"


@dataclass(frozen=True, slots=True)
class Rate:
    numerator: int
    denominator: int

    @property
    def value(self) -> float | None:
        """numerator/denominator, or None when the denominator is 0: an
        empty denominator is reported as undefined, never as 0."""
        if self.denominator == 0:
            return None
        return self.numerator / self.denominator


@dataclass(frozen=True)
class PairedOutcome:
    """A fake's recognition result joined with its paired real image's.

    ``fake_record`` is the joined view: the CR prediction with the FS
    similarity (if any) merged in and names already alias-resolved.
    """

    fake_record: QueryRecord
    real_record: QueryRecord | None
    fake_probe: ProbeImage


def eval_targeted(outcome: PairedOutcome) -> bool:
    """Targeted success: the fake is named as its target AND the paired
    real image is named the same.

    Synthesis fakes (no target) and fakes without a paired real record
    evaluate under a relaxed rule: see ta_is_relaxed."""
    probe = outcome.fake_probe
    match = outcome.fake_record.prediction.match
    if match is None:
        return False
    name = match.name.canonical_name
    if probe.method is GenMethod.SYNTHESIS:
        return name in {probe.reference.canonical_name, probe.reference2.canonical_name}
    if outcome.real_record is None:
        return name == probe.target.canonical_name
    real_match = outcome.real_record.prediction.match
    return (
        name == probe.target.canonical_name
        and real_match is not None
        and real_match.name.canonical_name == name
    )


def ta_is_relaxed(outcome: PairedOutcome) -> bool:
    """True when eval_targeted could not apply both conditions: synthesis
    fakes match against their blended references, and fakes without a
    paired real record drop the real-side condition."""
    return outcome.fake_probe.method is GenMethod.SYNTHESIS or outcome.real_record is None


def eval_nontargeted(record: QueryRecord) -> bool:
    """Non-targeted success: the provider named any celebrity at all."""
    return record.prediction.match is not None


def classify_na_outcome(outcome: PairedOutcome) -> NaOutcome:
    """Partition a fake's recognition outcome; a target match wins over a
    reference match on degenerate manifests where the two coincide."""
    probe = outcome.fake_probe
    match = outcome.fake_record.prediction.match
    if match is None:
        return NaOutcome.NO_MATCH
    name = match.name.canonical_name
    if probe.target is not None and name == probe.target.canonical_name:
        return NaOutcome.TARGET_MATCH
    refs = {r.canonical_name for r in (probe.reference, probe.reference2) if r is not None}
    if name in refs:
        return NaOutcome.REFERENCE_MATCH
    return NaOutcome.OTHER_CELEBRITY


def eval_dhf(outcome: PairedOutcome) -> bool:
    """High fidelity: fake recognized with strictly higher confidence than
    the paired real image (an unrecognized real compares as confidence 0)."""
    if outcome.real_record is None:
        raise MetricsError(
            f"probe {outcome.fake_probe.probe_id!r} has no paired real record; "
            "the fidelity metric is skipped for it"
        )
    match = outcome.fake_record.prediction.match
    if match is None:
        return False
    return match.confidence > outcome.real_record.prediction.confidence


def eval_dhc(record: QueryRecord, beta: float) -> bool:
    """High confidence: recognized with confidence strictly above beta."""
    match = record.prediction.match
    return match is not None and match.confidence > beta


def eval_dhs(record: QueryRecord, gamma: float) -> bool:
    """High similarity: recognition failed but the similarity to the paired
    real image is strictly above gamma."""
    if record.prediction.match is not None:
        return False
    return record.similarity is not None and record.similarity > gamma


# ---------------------------------------------------------------------------
# Aggregation


@dataclass(frozen=True)
class MetricCell:
    provider_id: str
    dataset_id: str
    n_fakes: int = 0
    n_reals: int = 0
    ta: Rate = Rate(0, 0)
    na: Rate = Rate(0, 0)
    dhf: Rate = Rate(0, 0)
    dhc: Rate = Rate(0, 0)
    dhs: Rate = Rate(0, 0)
    dhs_cr_missed: int = 0  # alternative DHS denominator: fakes whose CR missed
    sic: Rate = Rate(0, 0)
    na_classes: dict[str, int] = field(default_factory=dict)
    ta_relaxed: int = 0
    fs_missing: int = 0
    dhf_excluded: int = 0
    defense_blocked: int = 0
    skipped: int = 0


@dataclass(frozen=True)
class CelebrityRow:
    provider_id: str
    dataset_id: str
    celebrity: str
    n_fakes: int
    ta_count: int
    na_count: int
    mean_fake_confidence: float | None
    mean_real_confidence: float | None


@dataclass(frozen=True)
class DemographicRow:
    provider_id: str
    dataset_id: str
    tag: Demographic
    n_subject_records: int    # CR records whose probe subject carries this tag
    n_predicted_records: int  # CR matches whose predicted identity carries this tag


@dataclass(frozen=True)
class EvaluationReport:
    config: MetricConfig
    cells: dict[tuple[str, str], MetricCell]
    celebrity_rows: tuple[CelebrityRow, ...] = ()
    demographic_rows: tuple[DemographicRow, ...] = ()


def _mean(values: list[float]) -> float | None:
    # fsum keeps the mean identical regardless of record order
    return math.fsum(values) / len(values) if values else None


class Aggregator:
    """Mergeable aggregation state: one CR and one FS slot per
    (provider, probe), plus the skipped records."""

    def __init__(self):
        self._cr: dict[tuple[str, str], QueryRecord] = {}
        self._fs: dict[tuple[str, str], QueryRecord] = {}
        self._skips: list[QueryRecord] = []

    def add(self, record: QueryRecord) -> None:
        if record.is_skip:
            self._skips.append(record)
            return
        key = (record.provider_id, record.probe_id)
        slot = self._cr if record.request_kind is RequestKind.CR else self._fs
        if key in slot:
            raise MetricsError(
                f"duplicate {record.request_kind.value} record for {key}"
            )
        slot[key] = record

    def merge(self, other: "Aggregator") -> "Aggregator":
        merged = Aggregator()
        for src in (self, other):
            for rec in src._skips:
                merged._skips.append(rec)
            for slot_name in ("_cr", "_fs"):
                for key, rec in getattr(src, slot_name).items():
                    dst = getattr(merged, slot_name)
                    if key in dst:
                        raise MetricsError(f"duplicate record for {key} while merging")
                    dst[key] = rec
        return merged

    # -- finalization ------------------------------------------------------

    def finalize(self, manifest: DatasetManifest, config: MetricConfig) -> EvaluationReport:
        builders: dict[tuple[str, str], _CellBuilder] = {}

        def builder(provider: str, dataset: str) -> "_CellBuilder":
            return builders.setdefault(
                (provider, dataset), _CellBuilder(provider, dataset)
            )

        for rec in self._skips:
            probe = manifest.probe(rec.probe_id)
            builder(rec.provider_id, probe.dataset_id).skipped += 1

        for (provider, probe_id), rec in sorted(self._cr.items()):
            probe = manifest.probe(probe_id)
            cell = builder(provider, probe.dataset_id)
            if probe.kind is ProbeKind.REAL:
                cell.add_real(probe, rec, manifest)
            else:
                outcome = self._outcome(provider, probe, rec, manifest)
                cell.add_fake(probe, outcome, config, manifest)

        cells = {key: b.build() for key, b in sorted(builders.items())}
        rows = tuple(
            row for key in sorted(builders) for row in builders[key].celebrity_rows()
        )
        demo = tuple(
            row for key in sorted(builders) for row in builders[key].demographic_rows()
        )
        return EvaluationReport(config=config, cells=cells, celebrity_rows=rows,
                                demographic_rows=demo)

    def _outcome(
        self,
        provider: str,
        probe: ProbeImage,
        rec: QueryRecord,
        manifest: DatasetManifest,
    ) -> PairedOutcome:
        fs_rec = self._fs.get((provider, probe.probe_id))
        joined = _join(rec, fs_rec, manifest)
        real_id = pair_fake_with_real(manifest, probe.probe_id)
        real_rec = self._cr.get((provider, real_id)) if real_id is not None else None
        if real_rec is not None:
            real_rec = _join(real_rec, None, manifest)
        return PairedOutcome(fake_record=joined, real_record=real_rec, fake_probe=probe)


def _join(cr: QueryRecord, fs: QueryRecord | None, manifest: DatasetManifest) -> QueryRecord:
    """Joined per-probe view: alias-resolved CR prediction plus the FS
    similarity, presented as a single record."""
    prediction = cr.prediction
    if prediction.match is not None:
        resolved = manifest.resolve_alias(prediction.match.name)
        if resolved is not prediction.match.name:
            prediction = replace(prediction, match=replace(prediction.match, name=resolved))
    similarity = fs.similarity if fs is not None else None
    return QueryRecord(
        probe_id=cr.probe_id,
        provider_id=cr.provider_id,
        request_kind=cr.request_kind,
        prediction=prediction,
        similarity=similarity,
        latency_ms=cr.latency_ms,
        unit_cost=cr.unit_cost,
        skip_reason=cr.skip_reason,
        timestamp=cr.timestamp,
    )


class _CellBuilder:
    def __init__(self, provider_id: str, dataset_id: str):
        self.provider = provider_id
        self.dataset = dataset_id
        self.n_fakes = 0
        self.n_reals = 0
        self.ta = 0
        self.na = 0
        self.dhf = 0
        self.dhf_den = 0
        self.dhc = 0
        self.dhs = 0
        self.dhs_cr_missed = 0
        self.na_classes = {c.value: 0 for c in NaOutcome}
        self.ta_relaxed = 0
        self.fs_missing = 0
        self.dhf_excluded = 0
        self.defense_blocked = 0
        self.skipped = 0
        self.sic_success: dict[str, bool] = {}
        self.fake_conf: dict[str, list[float]] = {}
        self.real_conf: dict[str, list[float]] = {}
        self.celeb_fakes: dict[str, int] = {}
        self.celeb_ta: dict[str, int] = {}
        self.celeb_na: dict[str, int] = {}
        self.demo_subjects: dict[Demographic, int] = {}
        self.demo_predicted: dict[Demographic, int] = {}

    def _note_demographics(self, probe: ProbeImage, record: QueryRecord) -> None:
        subject = subject_identity(probe)
        if subject is not None:
            tag = subject.demographic_tag
            self.demo_subjects[tag] = self.demo_subjects.get(tag, 0) + 1
        if record.prediction.match is not None:
            tag = record.prediction.match.name.demographic_tag
            self.demo_predicted[tag] = self.demo_predicted.get(tag, 0) + 1

    def add_real(self, probe: ProbeImage, rec: QueryRecord, manifest: DatasetManifest) -> None:
        rec = _join(rec, None, manifest)
        self.n_reals += 1
        self._note_demographics(probe, rec)
        if rec.prediction.match is not None and probe.target is not None:
            self.real_conf.setdefault(probe.target.canonical_name, []).append(
                rec.prediction.match.confidence
            )

    def add_fake(
        self,
        probe: ProbeImage,
        outcome: PairedOutcome,
        config: MetricConfig,
        manifest: DatasetManifest,
    ) -> None:
        rec = outcome.fake_record
        self.n_fakes += 1
        self._note_demographics(probe, rec)
        if rec.skip_reason == DEFENSE_BLOCKED:
            self.defense_blocked += 1

        ta = eval_targeted(outcome)
        if ta_is_relaxed(outcome):
            self.ta_relaxed += 1
        na = eval_nontargeted(rec)
        self.ta += ta
        self.na += na
        self.na_classes[classify_na_outcome(outcome).value] += 1

        if outcome.real_record is None:
            self.dhf_excluded += 1
        else:
            self.dhf_den += 1
            self.dhf += eval_dhf(outcome)

        self.dhc += eval_dhc(rec, config.beta)

        if rec.prediction.match is None:
            self.dhs_cr_missed += 1
            if eval_dhs(rec, config.gamma):
                self.dhs += 1
            elif rec.similarity is None and rec.skip_reason != DEFENSE_BLOCKED:
                self.fs_missing += 1

        # Per-celebrity bookkeeping (targets; blended references for synthesis)
        if probe.target is not None:
            buckets = [probe.target.canonical_name]
        else:
            buckets = sorted({
                probe.reference.canonical_name, probe.reference2.canonical_name
            })
        for name in buckets:
            self.sic_success[name] = self.sic_success.get(name, False) or ta
            self.celeb_fakes[name] = self.celeb_fakes.get(name, 0) + 1
            self.celeb_ta[name] = self.celeb_ta.get(name, 0) + ta
            self.celeb_na[name] = self.celeb_na.get(name, 0) + na
        if rec.prediction.match is not None:
            for name in buckets:
                self.fake_conf.setdefault(name, []).append(rec.prediction.match.confidence)

    def build(self) -> MetricCell:
        cell = MetricCell(
            provider_id=self.provider,
            dataset_id=self.dataset,
            n_fakes=self.n_fakes,
            n_reals=self.n_reals,
            ta=Rate(self.ta, self.n_fakes),
            na=Rate(self.na, self.n_fakes),
            dhf=Rate(self.dhf, self.dhf_den),
            dhc=Rate(self.dhc, self.n_fakes),
            dhs=Rate(self.dhs, self.n_fakes),
            dhs_cr_missed=self.dhs_cr_missed,
            sic=Rate(sum(self.sic_success.values()), len(self.sic_success)),
            na_classes=dict(self.na_classes),
            ta_relaxed=self.ta_relaxed,
            fs_missing=self.fs_missing,
            dhf_excluded=self.dhf_excluded,
            defense_blocked=self.defense_blocked,
            skipped=self.skipped,
        )
        if cell.ta.numerator > cell.na.numerator:
            raise MetricsError("internal invariant broken: TA count exceeds NA count")
        return cell

    def celebrity_rows(self) -> list[CelebrityRow]:
        return [
            CelebrityRow(
                provider_id=self.provider,
                dataset_id=self.dataset,
                celebrity=name,
                n_fakes=self.celeb_fakes[name],
                ta_count=self.celeb_ta.get(name, 0),
                na_count=self.celeb_na.get(name, 0),
                mean_fake_confidence=_mean(self.fake_conf.get(name, [])),
                mean_real_confidence=_mean(self.real_conf.get(name, [])),
            )
            for name in sorted(self.celeb_fakes)
        ]

    def demographic_rows(self) -> list[DemographicRow]:
        tags = sorted(
            set(self.demo_subjects) | set(self.demo_predicted), key=lambda t: t.value
        )
        return [
            DemographicRow(
                provider_id=self.provider,
                dataset_id=self.dataset,
                tag=tag,
                n_subject_records=self.demo_subjects.get(tag, 0),
                n_predicted_records=self.demo_predicted.get(tag, 0),
            )
            for tag in tags
        ]


def aggregate(
    records: list[QueryRecord], manifest: DatasetManifest, config: MetricConfig | None = None
) -> EvaluationReport:
    """Aggregate a complete query log into an evaluation report."""
    agg = Aggregator()
    for rec in records:
        agg.add(rec)
    return agg.finalize(manifest, config or MetricConfig())


def compute_sic(
    records: list[QueryRecord],
    manifest: DatasetManifest,
    provider_id: str | None = None,
) -> tuple[dict[IdentityRef, bool], Rate]:
    """Impersonation-existence map over a single provider's log."""
    providers = {r.provider_id for r in records}
    if provider_id is None:
        if len(providers) > 1:
            raise MetricsError("log covers multiple providers; pass provider_id")
        provider_id = next(iter(providers)) if providers else ""
    report = aggregate([r for r in records if r.provider_id == provider_id], manifest)

    success: dict[IdentityRef, bool] = {}
    num = den = 0
    for row in report.celebrity_rows:
        ident = manifest.identities.get(row.celebrity) or normalize_identity(row.celebrity)
        success[ident] = row.ta_count > 0
        den += 1
        num += row.ta_count > 0
    return success, Rate(num, den)
