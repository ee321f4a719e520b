"""Dataset manifests: ingestion, validation, canonical serialization.

A manifest is the ground-truth side of every metric: which probes exist,
which are fake, who they impersonate, and which real images anchor the
fidelity and similarity comparisons.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import ManifestError, ValidationError
from .model import (
    Demographic,
    GenMethod,
    IdentityRef,
    ProbeImage,
    ProbeKind,
    normalize_identity,
    subject_identity,
)


@dataclass(frozen=True)
class ManifestCounts:
    n_real: int
    n_fake: int
    n_celebrities: int


@dataclass(frozen=True)
class DatasetManifest:
    dataset_id: str
    description: str
    probes: tuple[ProbeImage, ...]
    alias_table: Mapping[str, IdentityRef] = field(default_factory=dict)
    # Derived, filled by build_manifest:
    real_index: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    identities: Mapping[str, IdentityRef] = field(default_factory=dict)
    counts: ManifestCounts = ManifestCounts(0, 0, 0)

    def probe(self, probe_id: str) -> ProbeImage:
        try:
            return self._by_id[probe_id]
        except KeyError:
            raise ManifestError(f"unknown probe_id {probe_id!r}") from None

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {p.probe_id: p for p in self.probes})

    def resolve_alias(self, name: IdentityRef) -> IdentityRef:
        """Map a provider-returned identity through the alias table.

        Applied at prediction-comparison time; unknown names pass through
        unchanged (with a demographic looked up from the manifest when the
        name happens to be a manifest identity).
        """
        resolved = self.alias_table.get(name.canonical_name, name)
        return self.identities.get(resolved.canonical_name, resolved)


def build_manifest(
    dataset_id: str,
    description: str,
    probes: Iterable[ProbeImage],
    aliases: Mapping[str, str] | None = None,
) -> DatasetManifest:
    """Assemble and validate a manifest from already-constructed probes.

    Raises ManifestError carrying every violated rule (probe_id + rule text).
    """
    probes = tuple(probes)
    violations: list[str] = []
    if not dataset_id:
        violations.append("dataset_id must be non-empty")

    seen: set[str] = set()
    for p in probes:
        if p.probe_id in seen:
            violations.append(f"probe {p.probe_id!r}: duplicate probe_id")
        seen.add(p.probe_id)

    identities = _identity_registry(probes, violations)

    real_ids: dict[str, list[str]] = {}
    for p in probes:
        if p.kind is ProbeKind.REAL and p.target is not None:
            real_ids.setdefault(p.target.canonical_name, []).append(p.probe_id)
    real_index = {name: tuple(sorted(ids)) for name, ids in sorted(real_ids.items())}

    for p in probes:
        if p.is_fake and p.target is not None and not p.no_real_reference:
            if p.target.canonical_name not in real_index:
                violations.append(
                    f"probe {p.probe_id!r}: fake target {p.target.canonical_name!r} "
                    "has no real probe and is not flagged no_real_reference"
                )

    alias_table: dict[str, IdentityRef] = {}
    for raw_key, raw_value in sorted((aliases or {}).items()):
        try:
            key = normalize_identity(raw_key).canonical_name
            value = normalize_identity(raw_value)
        except ValidationError as e:
            violations.append(f"alias {raw_key!r}: {e}")
            continue
        alias_table[key] = identities.get(value.canonical_name, value)

    if violations:
        raise ManifestError(violations)

    n_fake = sum(1 for p in probes if p.is_fake)
    counts = ManifestCounts(
        n_real=len(probes) - n_fake,
        n_fake=n_fake,
        n_celebrities=len(_celebrity_set(probes)),
    )
    return DatasetManifest(
        dataset_id=dataset_id,
        description=description,
        probes=probes,
        alias_table=alias_table,
        real_index=real_index,
        identities=identities,
        counts=counts,
    )


def _celebrity_set(probes: Iterable[ProbeImage]) -> set[str]:
    """Identities the dataset can impersonate: every target, plus the blended
    reference identities of Synthesis fakes (which have no target)."""
    names: set[str] = set()
    for p in probes:
        if p.target is not None:
            names.add(p.target.canonical_name)
        elif p.method is GenMethod.SYNTHESIS:
            for ref in (p.reference, p.reference2):
                if ref is not None:
                    names.add(ref.canonical_name)
    return names


def _identity_registry(
    probes: Iterable[ProbeImage], violations: list[str]
) -> dict[str, IdentityRef]:
    registry: dict[str, IdentityRef] = {}
    for p in probes:
        for ident in (p.target, p.reference, p.reference2):
            if ident is None:
                continue
            known = registry.get(ident.canonical_name)
            if known is None or known.demographic_tag is Demographic.UNKNOWN:
                registry[ident.canonical_name] = ident
            elif (
                ident.demographic_tag is not Demographic.UNKNOWN
                and ident.demographic_tag is not known.demographic_tag
            ):
                violations.append(
                    f"identity {ident.canonical_name!r}: conflicting demographic tags "
                    f"{known.demographic_tag.value} vs {ident.demographic_tag.value}"
                )
    return registry


def pair_fake_with_real(manifest: DatasetManifest, fake_probe_id: str) -> str | None:
    """Representative real probe for a fake: first of the target's real probe
    ids in sorted order, or None when the fake has no usable target."""
    probe = manifest.probe(fake_probe_id)
    if not probe.is_fake:
        raise ManifestError(f"probe {fake_probe_id!r} is not a fake")
    if probe.target is None or probe.no_real_reference:
        return None
    ids = manifest.real_index.get(probe.target.canonical_name)
    return ids[0] if ids else None


# ---------------------------------------------------------------------------
# File format

_PROBE_KEYS = (
    "probe_id", "uri", "kind", "method", "dataset_id", "target", "reference",
    "reference2", "source_video_id", "demographic_tag", "no_real_reference",
)


def load_manifest(locator: str | Path) -> DatasetManifest:
    """Load and fully validate a manifest file (UTF-8 JSON)."""
    path = Path(locator)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ManifestError(f"cannot read manifest {path}: {e}") from e
    return loads_manifest(text)


def loads_manifest(text: str) -> DatasetManifest:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ManifestError(f"manifest is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ManifestError("manifest must be a JSON object")

    violations: list[str] = []
    for key in ("dataset_id", "description", "probes"):
        if key not in data:
            violations.append(f"manifest missing key {key!r}")
    if not isinstance(data.get("probes", []), list):
        violations.append("manifest 'probes' must be an array")
    if violations:
        raise ManifestError(violations)

    probes: list[ProbeImage] = []
    for i, obj in enumerate(data["probes"]):
        try:
            probes.append(_parse_probe(obj, i))
        except (ValidationError, ManifestError) as e:
            violations.append(str(e))
    if violations:
        raise ManifestError(violations)

    aliases = data.get("aliases") or {}
    if not isinstance(aliases, dict):
        raise ManifestError("manifest 'aliases' must be an object")
    return build_manifest(data["dataset_id"], data.get("description", ""), probes, aliases)


def _parse_probe(obj: Any, index: int) -> ProbeImage:
    if not isinstance(obj, dict):
        raise ManifestError(f"probe #{index}: must be an object")
    pid = obj.get("probe_id")
    if not isinstance(pid, str) or not pid:
        raise ManifestError(f"probe #{index}: probe_id must be a non-empty string")
    try:
        kind = ProbeKind(obj["kind"])
        method = GenMethod(obj["method"])
    except (KeyError, ValueError) as e:
        raise ManifestError(f"probe {pid!r}: bad kind/method ({e})") from e

    tag = Demographic.UNKNOWN
    if obj.get("demographic_tag") is not None:
        try:
            tag = Demographic(obj["demographic_tag"])
        except ValueError as e:
            raise ManifestError(f"probe {pid!r}: bad demographic_tag ({e})") from e

    def ident(key: str, demographic: Demographic = Demographic.UNKNOWN) -> IdentityRef | None:
        raw = obj.get(key)
        if raw is None:
            return None
        if not isinstance(raw, str):
            raise ManifestError(f"probe {pid!r}: {key} must be a string")
        return normalize_identity(raw, demographic)

    # The probe's demographic_tag describes its subject: the target when
    # present, otherwise the (first) reference.
    has_target = obj.get("target") is not None
    return ProbeImage(
        probe_id=pid,
        uri=str(obj.get("uri", "")),
        kind=kind,
        method=method,
        dataset_id=str(obj.get("dataset_id", "")),
        target=ident("target", tag),
        reference=ident("reference", tag if not has_target else Demographic.UNKNOWN),
        reference2=ident("reference2"),
        source_video_id=obj.get("source_video_id"),
        no_real_reference=bool(obj.get("no_real_reference", False)),
    )


def serialize_manifest(manifest: DatasetManifest) -> bytes:
    """Canonical byte form: documented key order, probes sorted by probe_id,
    aliases sorted by key, 2-space indent, trailing newline."""
    probes = []
    for p in sorted(manifest.probes, key=lambda p: p.probe_id):
        subject = subject_identity(p)
        tag = subject.demographic_tag if subject else Demographic.UNKNOWN
        probes.append({
            "probe_id": p.probe_id,
            "uri": p.uri,
            "kind": p.kind.value,
            "method": p.method.value,
            "dataset_id": p.dataset_id,
            "target": p.target.canonical_name if p.target else None,
            "reference": p.reference.canonical_name if p.reference else None,
            "reference2": p.reference2.canonical_name if p.reference2 else None,
            "source_video_id": p.source_video_id,
            "demographic_tag": tag.value if tag is not Demographic.UNKNOWN else None,
            "no_real_reference": p.no_real_reference,
        })
    doc = {
        "dataset_id": manifest.dataset_id,
        "description": manifest.description,
        "probes": probes,
        "aliases": {
            k: v.canonical_name for k, v in sorted(manifest.alias_table.items())
        },
    }
    return (json.dumps(doc, indent=2, ensure_ascii=False) + "\n").encode("utf-8")
