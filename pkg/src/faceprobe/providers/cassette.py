"""Record/replay cassettes: reproducible campaigns without live spend.

A cassette is an append-only JSONL stream; lookups are exact-key
(provider, probe, request kind, FS counterpart) with no fuzzy matching.
When re-recording appends a newer entry under the same key, the latest
one wins on replay.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from ..errors import CassetteMissError, ValidationError
from ..model import Match, Prediction, ProbeImage, RequestKind, normalize_identity
from .base import RecognizerBackend

Key = tuple[str, str, str, str | None]  # provider_id, probe_id, kind, counterpart


@dataclass(frozen=True)
class CassetteEntry:
    provider_id: str
    probe_id: str
    request_kind: RequestKind
    counterpart_probe_id: str | None = None
    name: str | None = None
    confidence: float | None = None
    similarity: float | None = None
    latency_ms: float = 0.0
    recorded_at: str = ""

    @property
    def key(self) -> Key:
        return (self.provider_id, self.probe_id, self.request_kind.value, self.counterpart_probe_id)

    def to_line(self) -> str:
        response: dict = {}
        if self.request_kind is RequestKind.CR:
            response["name"] = self.name
            if self.name is not None:
                response["confidence"] = self.confidence
        else:
            response["similarity"] = self.similarity
        doc = {
            "provider_id": self.provider_id,
            "probe_id": self.probe_id,
            "request_kind": self.request_kind.value,
        }
        if self.counterpart_probe_id is not None:
            doc["counterpart_probe_id"] = self.counterpart_probe_id
        doc["response"] = response
        doc["latency_ms"] = self.latency_ms
        doc["recorded_at"] = self.recorded_at
        return json.dumps(doc, ensure_ascii=False)


def _parse_entry(line: str, lineno: int) -> CassetteEntry:
    try:
        doc = json.loads(line)
        response = doc.get("response") or {}
        return CassetteEntry(
            provider_id=doc["provider_id"],
            probe_id=doc["probe_id"],
            request_kind=RequestKind(doc["request_kind"]),
            counterpart_probe_id=doc.get("counterpart_probe_id"),
            name=response.get("name"),
            confidence=response.get("confidence"),
            similarity=response.get("similarity"),
            latency_ms=float(doc.get("latency_ms", 0.0)),
            recorded_at=doc.get("recorded_at", ""),
        )
    except (KeyError, ValueError, TypeError) as e:
        raise ValidationError(f"cassette line {lineno}: {e}") from e


class Cassette:
    def __init__(self, entries: dict[Key, CassetteEntry] | None = None):
        self.entries = entries or {}

    def lookup(self, key: Key) -> CassetteEntry:
        try:
            return self.entries[key]
        except KeyError:
            raise CassetteMissError(f"no cassette entry for {key}") from None


def load_cassette(path: str | Path) -> Cassette:
    entries: dict[Key, CassetteEntry] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            entry = _parse_entry(line, lineno)
            entries[entry.key] = entry
    return Cassette(entries)


class CassetteRecorder:
    """Appends entries as they are captured; safe to reopen and extend."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def append(self, entry: CassetteEntry) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(entry.to_line() + "\n")


class ReplayBackend:
    """Answers only from the cassette. Any transport handed in is held but
    never used, so tests can inject one that explodes on contact."""

    def __init__(self, provider_id: str, cassette: Cassette, transport: Callable | None = None):
        self.provider_id = provider_id
        self._cassette = cassette
        self._transport = transport  # intentionally unused

    def recognize_celebrity(self, probe: ProbeImage) -> tuple[Prediction, float]:
        entry = self._cassette.lookup((self.provider_id, probe.probe_id, "CR", None))
        if entry.name is None:
            return Prediction(None), entry.latency_ms
        if entry.confidence is None:
            raise ValidationError(f"cassette CR entry for {probe.probe_id!r} lacks confidence")
        return Prediction(Match(normalize_identity(entry.name), entry.confidence)), entry.latency_ms

    def face_similarity(self, real_probe: ProbeImage, fake_probe: ProbeImage) -> tuple[float, float]:
        entry = self._cassette.lookup(
            (self.provider_id, fake_probe.probe_id, "FS", real_probe.probe_id)
        )
        if entry.similarity is None:
            raise ValidationError(f"cassette FS entry for {fake_probe.probe_id!r} lacks similarity")
        return entry.similarity, entry.latency_ms


def _utcnow_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class RecordingBackend:
    """Wraps any backend and appends every response to a cassette."""

    def __init__(self, inner: RecognizerBackend, recorder: CassetteRecorder,
                 now_fn: Callable[[], str] = _utcnow_iso):
        self._inner = inner
        self._recorder = recorder
        self._now_fn = now_fn
        self.provider_id = inner.provider_id

    def recognize_celebrity(self, probe: ProbeImage) -> tuple[Prediction, float]:
        prediction, latency = self._inner.recognize_celebrity(probe)
        self._recorder.append(CassetteEntry(
            provider_id=self.provider_id,
            probe_id=probe.probe_id,
            request_kind=RequestKind.CR,
            name=prediction.match.name.canonical_name if prediction.match else None,
            confidence=prediction.match.confidence if prediction.match else None,
            latency_ms=latency,
            recorded_at=self._now_fn(),
        ))
        return prediction, latency

    def face_similarity(self, real_probe: ProbeImage, fake_probe: ProbeImage) -> tuple[float, float]:
        similarity, latency = self._inner.face_similarity(real_probe, fake_probe)
        self._recorder.append(CassetteEntry(
            provider_id=self.provider_id,
            probe_id=fake_probe.probe_id,
            request_kind=RequestKind.FS,
            counterpart_probe_id=real_probe.probe_id,
            similarity=similarity,
            latency_ms=latency,
            recorded_at=self._now_fn(),
        ))
        return similarity, latency
