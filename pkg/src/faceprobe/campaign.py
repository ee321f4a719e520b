"""Campaign orchestration: every probe gets one recognition query per
provider; fakes whose recognition missed get a similarity query against
their paired real image. Rate limits, retries, and per-transaction cost
accounting apply throughout.

Replay and simulated campaigns are fully deterministic: they run on a
simulated clock and the log is sorted by (provider, probe, request kind).
"""

from __future__ import annotations

import enum
import hashlib
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Mapping

from .errors import (
    CassetteMissError,
    ProbeUnreadableError,
    ProviderError,
    TransientProviderError,
    ValidationError,
)
from .manifest import DatasetManifest, pair_fake_with_real
from .model import (
    Match,
    Prediction,
    ProbeImage,
    QueryRecord,
    RequestKind,
    normalize_identity,
)
from .pricing import CostMeter, PricingSchedule, default_pricing
from .providers.base import RecognizerBackend
from .ratelimit import Clock, RateLimiter, SimulatedClock, SystemClock

EPOCH = datetime(2021, 1, 1, tzinfo=timezone.utc)

SKIP_UNREADABLE = "unreadable_image"
SKIP_CASSETTE_MISS = "cassette_miss"
SKIP_RETRIES = "retry_exhausted"
SKIP_PROVIDER_ERROR = "provider_error"


class CampaignMode(enum.Enum):
    LIVE = "live"
    REPLAY = "replay"
    SIMULATED = "simulated"


class FsPolicy(enum.Enum):
    ON_CR_MISS = "on_cr_miss"
    NEVER = "never"
    ALWAYS = "always"


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_backoff_s: float = 0.5
    multiplier: float = 2.0
    jitter_frac: float = 0.1

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValidationError("max_attempts must be >= 1")


@dataclass(frozen=True)
class RateSpec:
    capacity: float = 5.0
    refill_per_s: float = 5.0


@dataclass(frozen=True)
class CampaignConfig:
    provider_ids: tuple[str, ...]
    mode: CampaignMode = CampaignMode.SIMULATED
    fs_policy: FsPolicy = FsPolicy.ON_CR_MISS
    max_in_flight: int = 4
    rates: Mapping[str, RateSpec] = field(default_factory=dict)
    default_rate: RateSpec = RateSpec()
    retry: RetryPolicy = RetryPolicy()
    bill_per_response: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        if not self.provider_ids:
            raise ValidationError("campaign needs at least one provider")
        if self.max_in_flight < 1:
            raise ValidationError("max_in_flight must be >= 1")

    def rate_for(self, provider_id: str) -> RateSpec:
        return self.rates.get(provider_id, self.default_rate)


def run_campaign(
    manifest: DatasetManifest,
    backends: Mapping[str, RecognizerBackend],
    config: CampaignConfig,
    pricing: PricingSchedule | None = None,
    admitted: set[str] | None = None,
) -> list[QueryRecord]:
    """Run the full query protocol and return the query log.

    ``admitted`` optionally restricts the campaign to a subset of probe ids
    (the defense gateway uses this; excluded probes produce no records here).
    Partial failures become skip records; only unusable configuration
    aborts the campaign.
    """
    missing = [pid for pid in config.provider_ids if pid not in backends]
    if missing:
        raise ValidationError(f"no backend for providers: {missing}")
    schedule = pricing or default_pricing()
    meter = CostMeter(schedule)
    meter_lock = threading.Lock()

    records: list[QueryRecord] = []
    if config.mode is CampaignMode.LIVE:
        with ThreadPoolExecutor(max_workers=len(config.provider_ids)) as pool:
            futures = [
                pool.submit(
                    _provider_pass, manifest, backends[pid], config, meter,
                    meter_lock, SystemClock(), admitted,
                )
                for pid in config.provider_ids
            ]
            for future in futures:
                records.extend(future.result())
        records.sort(key=lambda r: r.timestamp)
    else:
        for pid in config.provider_ids:
            records.extend(_provider_pass(
                manifest, backends[pid], config, meter, meter_lock,
                SimulatedClock(), admitted,
            ))
        records.sort(key=lambda r: (r.provider_id, r.probe_id, r.request_kind.value))
    return records


def _provider_pass(
    manifest: DatasetManifest,
    backend: RecognizerBackend,
    config: CampaignConfig,
    meter: CostMeter,
    meter_lock: threading.Lock,
    clock: Clock,
    admitted: set[str] | None,
) -> list[QueryRecord]:
    provider_id = backend.provider_id
    rate = config.rate_for(provider_id)
    limiter = RateLimiter(rate.capacity, rate.refill_per_s, clock)
    live = config.mode is CampaignMode.LIVE

    probes = [
        p for p in sorted(manifest.probes, key=lambda p: p.probe_id)
        if admitted is None or p.probe_id in admitted
    ]

    def charge() -> Decimal:
        with meter_lock:
            return meter.charge(provider_id)

    def timestamp(admitted_at: float) -> datetime:
        if live:
            return datetime.now(timezone.utc)
        return EPOCH + timedelta(seconds=admitted_at)

    def attempt_loop(probe: ProbeImage, call) -> tuple[object, float, Decimal, str | None]:
        """Returns (result|None, latency, accrued_cost, skip_reason)."""
        cost = Decimal(0)
        for attempt in range(1, config.retry.max_attempts + 1):
            try:
                result, latency = call()
            except TransientProviderError as e:
                if e.billable and config.bill_per_response:
                    cost += charge()
                if attempt == config.retry.max_attempts:
                    return None, 0.0, cost, SKIP_RETRIES
                clock.sleep(_backoff(config, provider_id, probe.probe_id, attempt))
                continue
            except ProbeUnreadableError:
                return None, 0.0, cost, SKIP_UNREADABLE
            except CassetteMissError:
                return None, 0.0, cost, SKIP_CASSETTE_MISS
            except ProviderError:
                # fatal for this probe only; the campaign carries on
                return None, 0.0, cost, SKIP_PROVIDER_ERROR
            cost += charge()
            return result, latency, cost, None
        raise AssertionError("unreachable")

    records: list[QueryRecord] = []
    records_lock = threading.Lock()
    cr_outcomes: dict[str, Prediction | None] = {}  # None = skipped

    def run_cr(probe: ProbeImage) -> None:
        admitted_at = limiter.acquire()
        prediction, latency, cost, skip = attempt_loop(
            probe, lambda: backend.recognize_celebrity(probe)
        )
        record = QueryRecord(
            probe_id=probe.probe_id,
            provider_id=provider_id,
            request_kind=RequestKind.CR,
            prediction=prediction if prediction is not None else Prediction(None),
            latency_ms=latency,
            unit_cost=cost,
            skip_reason=skip,
            timestamp=timestamp(admitted_at),
        )
        with records_lock:
            records.append(record)
            cr_outcomes[probe.probe_id] = None if skip else prediction

    def run_fs(fake: ProbeImage, real: ProbeImage) -> None:
        admitted_at = limiter.acquire()
        similarity, latency, cost, skip = attempt_loop(
            fake, lambda: backend.face_similarity(real, fake)
        )
        record = QueryRecord(
            probe_id=fake.probe_id,
            provider_id=provider_id,
            request_kind=RequestKind.FS,
            similarity=similarity,
            latency_ms=latency,
            unit_cost=cost,
            skip_reason=skip,
            timestamp=timestamp(admitted_at),
        )
        with records_lock:
            records.append(record)

    _fan_out(run_cr, probes, config, live)

    fs_targets: list[tuple[ProbeImage, ProbeImage]] = []
    if config.fs_policy is not FsPolicy.NEVER:
        for probe in probes:
            if not probe.is_fake or probe.probe_id not in cr_outcomes:
                continue
            outcome = cr_outcomes[probe.probe_id]
            if outcome is None:  # CR skipped: nothing to compare against
                continue
            if config.fs_policy is FsPolicy.ON_CR_MISS and outcome.match is not None:
                continue
            real_id = pair_fake_with_real(manifest, probe.probe_id)
            if real_id is None or (admitted is not None and real_id not in admitted):
                continue
            fs_targets.append((probe, manifest.probe(real_id)))
    _fan_out(lambda pair: run_fs(*pair), fs_targets, config, live)

    return records


def _fan_out(fn, items, config: CampaignConfig, live: bool) -> None:
    if not items:
        return
    if live and config.max_in_flight > 1:
        with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
            list(pool.map(fn, items))
    else:
        for item in items:
            fn(item)


def _backoff(config: CampaignConfig, provider_id: str, probe_id: str, attempt: int) -> float:
    base = config.retry.base_backoff_s * config.retry.multiplier ** (attempt - 1)
    digest = hashlib.sha256(
        f"{config.rng_seed}|backoff|{provider_id}|{probe_id}|{attempt}".encode()
    ).digest()
    unit = int.from_bytes(digest[:8], "big") / 2**64  # [0, 1)
    return base * (1.0 + config.retry.jitter_frac * (2.0 * unit - 1.0))


# ---------------------------------------------------------------------------
# Query-log file format: one JSON record per line, UTF-8. Key order is
# fixed: probe_id, provider_id, request_kind, name?, confidence?,
# similarity?, latency_ms, unit_cost, skip_reason?, timestamp.


def record_to_line(record: QueryRecord) -> str:
    doc: dict = {
        "probe_id": record.probe_id,
        "provider_id": record.provider_id,
        "request_kind": record.request_kind.value,
    }
    if record.prediction.match is not None:
        doc["name"] = record.prediction.match.name.canonical_name
        doc["confidence"] = record.prediction.match.confidence
    if record.similarity is not None:
        doc["similarity"] = record.similarity
    doc["latency_ms"] = round(record.latency_ms, 3)
    doc["unit_cost"] = str(record.unit_cost)
    if record.skip_reason is not None:
        doc["skip_reason"] = record.skip_reason
    doc["timestamp"] = record.timestamp.isoformat()
    return json.dumps(doc, ensure_ascii=False)


def line_to_record(line: str, lineno: int = 0) -> QueryRecord:
    try:
        doc = json.loads(line)
        prediction = Prediction(None)
        if doc.get("name") is not None:
            prediction = Prediction(
                Match(normalize_identity(doc["name"]), float(doc["confidence"]))
            )
        return QueryRecord(
            probe_id=doc["probe_id"],
            provider_id=doc["provider_id"],
            request_kind=RequestKind(doc["request_kind"]),
            prediction=prediction,
            similarity=doc.get("similarity"),
            latency_ms=float(doc.get("latency_ms", 0.0)),
            unit_cost=Decimal(doc.get("unit_cost", "0")),
            skip_reason=doc.get("skip_reason"),
            timestamp=datetime.fromisoformat(doc["timestamp"]),
        )
    except (KeyError, ValueError, TypeError) as e:
        raise ValidationError(f"query log line {lineno}: {e}") from e


def write_query_log(records: Iterable[QueryRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record_to_line(record) + "\n")


def read_query_log(path: str | Path) -> list[QueryRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if line:
                records.append(line_to_record(line, lineno))
    return records
