"""Deterministic simulated recognizer for desk-scale verification.

Each identity in the provider's gallery owns a unit embedding. A probe is
mapped to a latent embedding (real probes sit on their identity, fakes mix
target and reference according to a per-method fidelity weight), and
recognition is nearest-neighbor over the gallery with a confidence
threshold. The fidelity defaults make reenactment fakes land closer to
their target than replacement fakes, and blends sit between their two
references; these are simulator parameters, not measured facts.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from ..errors import ValidationError
from ..model import (
    Demographic,
    GenMethod,
    IdentityRef,
    Match,
    Prediction,
    ProbeImage,
    ProbeKind,
)

DEFAULT_FIDELITY: dict[GenMethod, float] = {
    GenMethod.REENACTMENT: 0.9,
    GenMethod.REPLACEMENT: 0.6,
    GenMethod.SYNTHESIS: 0.5,
}

_UNIT_TOL = 1e-9


def _rng(*parts: object) -> np.random.Generator:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


@dataclass(frozen=True)
class GalleryEntry:
    identity: IdentityRef
    embedding: np.ndarray

    def __post_init__(self):
        norm = float(np.linalg.norm(self.embedding))
        if abs(norm - 1.0) > _UNIT_TOL:
            raise ValidationError(
                f"gallery embedding for {self.identity.canonical_name!r} is not unit-norm"
            )


@dataclass(frozen=True)
class ProviderProfile:
    provider_id: str
    report_threshold: float  # percent; below it the provider reports no match
    gallery: tuple[GalleryEntry, ...]
    bias_weights: Mapping[Demographic, float] = field(default_factory=dict)
    rng_seed: int = 0
    noise_scale: float = 0.05
    fidelity: Mapping[GenMethod, float] = field(default_factory=lambda: dict(DEFAULT_FIDELITY))

    def __post_init__(self):
        if not 0.0 <= self.report_threshold <= 100.0:
            raise ValidationError("report_threshold outside [0, 100]")
        dims = {e.embedding.shape for e in self.gallery}
        if len(dims) > 1:
            raise ValidationError("gallery embeddings must share one dimension")
        for w in {**DEFAULT_FIDELITY, **self.fidelity}.values():
            if not 0.0 <= w <= 1.0:
                raise ValidationError("fidelity weights must lie in [0, 1]")

    @property
    def dim(self) -> int:
        return self.gallery[0].embedding.shape[0] if self.gallery else 64


def build_gallery(
    identities: Iterable[IdentityRef], dim: int = 64, seed: int = 0
) -> tuple[GalleryEntry, ...]:
    """Deterministic unit embeddings, one per identity, keyed by name."""
    entries = []
    for ident in identities:
        vec = _rng(seed, "gallery", ident.canonical_name).normal(size=dim)
        entries.append(GalleryEntry(ident, vec / np.linalg.norm(vec)))
    return tuple(entries)


def _hash_embedding(seed: int, probe_id: str, role: str, dim: int) -> np.ndarray:
    """Stand-in embedding for an identity absent from the gallery."""
    vec = _rng(seed, "out-of-gallery", role, probe_id).normal(size=dim)
    return vec / np.linalg.norm(vec)


def simulate_latent(
    probe: ProbeImage,
    profile: ProviderProfile,
    fidelity: Mapping[GenMethod, float] | None = None,
) -> np.ndarray:
    """Latent embedding the simulated provider perceives for this probe.

    Total and deterministic in (probe_id, profile.rng_seed).
    """
    weights = dict(DEFAULT_FIDELITY)
    weights.update(profile.fidelity)
    if fidelity:
        weights.update(fidelity)
    dim = profile.dim
    lookup = {e.identity.canonical_name: e.embedding for e in profile.gallery}

    def emb(ident: IdentityRef | None, role: str) -> np.ndarray:
        if ident is not None and ident.canonical_name in lookup:
            return lookup[ident.canonical_name]
        return _hash_embedding(profile.rng_seed, probe.probe_id, role, dim)

    if probe.kind is ProbeKind.REAL:
        base = emb(probe.target, "target")
    elif probe.method is GenMethod.SYNTHESIS:
        base = 0.5 * emb(probe.reference, "reference") + 0.5 * emb(probe.reference2, "reference2")
    else:
        w = weights[probe.method]
        base = w * emb(probe.target, "target") + (1.0 - w) * emb(probe.reference, "reference")

    if profile.noise_scale > 0.0:
        base = base + _rng(profile.rng_seed, "noise", probe.probe_id).normal(
            scale=profile.noise_scale, size=dim
        )
    norm = float(np.linalg.norm(base))
    if norm == 0.0:  # two exactly opposed references; pin a deterministic direction
        return _hash_embedding(profile.rng_seed, probe.probe_id, "degenerate", dim)
    return base / norm


class SimulatedBackend:
    """Gallery nearest-neighbor recognizer behind the backend interface."""

    def __init__(self, profile: ProviderProfile):
        self.profile = profile
        self.provider_id = profile.provider_id

    def _scores(self, latent: np.ndarray) -> list[tuple[float, GalleryEntry]]:
        scored = []
        for entry in self.profile.gallery:
            cos = float(np.dot(entry.embedding, latent))
            bias = self.profile.bias_weights.get(entry.identity.demographic_tag, 1.0)
            scored.append((min(100.0, 100.0 * max(0.0, cos) * bias), entry))
        scored.sort(key=lambda se: (-se[0], se[1].identity.canonical_name))
        return scored

    def recognize_celebrity(self, probe: ProbeImage) -> tuple[Prediction, float]:
        latency = self._latency(probe.probe_id, "cr")
        if not self.profile.gallery:
            return Prediction(None), latency
        score, entry = self._scores(simulate_latent(probe, self.profile))[0]
        if score < self.profile.report_threshold:
            return Prediction(None), latency
        return Prediction(Match(entry.identity, round(score, 4))), latency

    def face_similarity(self, real_probe: ProbeImage, fake_probe: ProbeImage) -> tuple[float, float]:
        a = simulate_latent(real_probe, self.profile)
        b = simulate_latent(fake_probe, self.profile)
        sim = round(100.0 * max(0.0, float(np.dot(a, b))), 4)
        return sim, self._latency(fake_probe.probe_id, "fs")

    def _latency(self, probe_id: str, kind: str) -> float:
        return 5.0 + float(_rng(self.profile.rng_seed, "latency", kind, probe_id).integers(0, 90))
