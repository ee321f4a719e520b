"""Seeded random manifests, query logs, and score benchmarks for tests.

Everything is driven by random.Random(seed): identical seeds produce
identical objects, so statistical assertions never flake.
"""

from __future__ import annotations

import random
from datetime import timedelta

from faceprobe.campaign import EPOCH
from faceprobe.manifest import DatasetManifest, build_manifest
from faceprobe.model import (
    DEFENSE_BLOCKED,
    Demographic,
    GenMethod,
    Match,
    Prediction,
    ProbeImage,
    ProbeKind,
    QueryRecord,
    RequestKind,
    normalize_identity,
)

_DEMOS = list(Demographic)


def gen_manifest(
    rng: random.Random,
    n_celebs: int = 4,
    n_real_per: int = 2,
    n_fakes: int = 10,
    dataset_id: str = "synth",
    with_aliases: bool = True,
) -> DatasetManifest:
    """Random valid manifest exercising every probe arm: replacement and
    reenactment fakes, synthesis blends, degenerate target==reference
    cases, and no-real-reference fakes of an otherwise unseen celebrity."""
    celebs = [
        normalize_identity(f"celeb {i}", rng.choice(_DEMOS)) for i in range(n_celebs)
    ]
    orphan = normalize_identity("orphan celeb", rng.choice(_DEMOS))
    probes: list[ProbeImage] = []
    for i, celeb in enumerate(celebs):
        for j in range(n_real_per):
            probes.append(ProbeImage(
                probe_id=f"r{i:02d}{j:02d}",
                uri=f"mem://real/{i}/{j}",
                kind=ProbeKind.REAL,
                method=GenMethod.NOT_APPLICABLE,
                dataset_id=dataset_id,
                target=celeb,
            ))
    for k in range(n_fakes):
        roll = rng.random()
        if roll < 0.2:
            ref, ref2 = rng.sample(celebs, 2)
            probes.append(ProbeImage(
                probe_id=f"f{k:03d}",
                uri=f"mem://fake/{k}",
                kind=ProbeKind.FAKE,
                method=GenMethod.SYNTHESIS,
                dataset_id=dataset_id,
                reference=ref,
                reference2=ref2,
            ))
        elif roll < 0.3:
            probes.append(ProbeImage(
                probe_id=f"f{k:03d}",
                uri=f"mem://fake/{k}",
                kind=ProbeKind.FAKE,
                method=rng.choice([GenMethod.REPLACEMENT, GenMethod.REENACTMENT]),
                dataset_id=dataset_id,
                target=orphan,
                reference=rng.choice(celebs),
                no_real_reference=True,
            ))
        else:
            target = rng.choice(celebs)
            # occasionally degenerate: the reference is the target itself
            reference = target if rng.random() < 0.1 else rng.choice(celebs)
            probes.append(ProbeImage(
                probe_id=f"f{k:03d}",
                uri=f"mem://fake/{k}",
                kind=ProbeKind.FAKE,
                method=rng.choice([GenMethod.REPLACEMENT, GenMethod.REENACTMENT]),
                dataset_id=dataset_id,
                target=target,
                reference=reference,
            ))
    aliases = {}
    if with_aliases and celebs:
        aliases[f"{celebs[0].canonical_name} (actor)"] = celebs[0].canonical_name
    return build_manifest(dataset_id, "generated", probes, aliases)


def gen_log(
    rng: random.Random,
    manifest: DatasetManifest,
    providers: list[str],
    p_match: float = 0.6,
    p_fs: float = 0.85,
    p_skip: float = 0.05,
    p_blocked: float = 0.05,
) -> list[QueryRecord]:
    """Random query log over the manifest, with boundary confidences and
    similarities, alias-named predictions, skips, and blocked records."""
    pool = sorted(manifest.identities)
    strangers = ["kate winslet", "naomi watts", "someone else"]
    alias_names = sorted(manifest.alias_table)
    records: list[QueryRecord] = []

    def confidence() -> float:
        return rng.choice([
            round(rng.uniform(0.0, 100.0), 2), 90.0, 0.01, 100.0, 89.99, 90.01,
        ])

    def predicted_name() -> str:
        bucket = rng.random()
        if bucket < 0.70 and pool:
            return rng.choice(pool)
        if bucket < 0.80 and alias_names:
            return rng.choice(alias_names)
        return rng.choice(strangers)

    for provider in providers:
        for probe in manifest.probes:
            ts = EPOCH + timedelta(seconds=rng.randrange(0, 3600))
            if rng.random() < p_skip:
                records.append(QueryRecord(
                    probe_id=probe.probe_id, provider_id=provider,
                    request_kind=RequestKind.CR,
                    skip_reason=rng.choice(["retry_exhausted", "unreadable_image"]),
                    timestamp=ts,
                ))
                continue
            blocked = probe.is_fake and rng.random() < p_blocked
            if blocked:
                records.append(QueryRecord(
                    probe_id=probe.probe_id, provider_id=provider,
                    request_kind=RequestKind.CR, skip_reason=DEFENSE_BLOCKED,
                    timestamp=ts,
                ))
            else:
                match = None
                if rng.random() < p_match:
                    match = Match(normalize_identity(predicted_name()), confidence())
                records.append(QueryRecord(
                    probe_id=probe.probe_id, provider_id=provider,
                    request_kind=RequestKind.CR, prediction=Prediction(match),
                    latency_ms=float(rng.randrange(5, 95)), timestamp=ts,
                ))
                missed = match is None
                if probe.is_fake and missed and rng.random() < p_fs:
                    records.append(QueryRecord(
                        probe_id=probe.probe_id, provider_id=provider,
                        request_kind=RequestKind.FS,
                        similarity=rng.choice([
                            round(rng.uniform(0.0, 100.0), 2), 80.0, 79.99, 80.01,
                        ]),
                        latency_ms=float(rng.randrange(5, 95)), timestamp=ts,
                    ))
    rng.shuffle(records)
    return records


def gen_overlap_benchmark(rng: random.Random, n: int):
    """Synthetic detector-score rows where threshold AND-gating misfires on
    reals: two tight low scores plus one noisy score per real row, three
    broad high scores per fake row, and mildly separated image statistics.

    Returns (features, labels) as plain lists; features are
    [s1, s2, s3, mean_r, mean_g, mean_b, var_r, var_g, var_b].
    """

    def clip(x, lo=0.0, hi=1.0):
        return min(hi, max(lo, x))

    features, labels = [], []
    for i in range(n):
        fake = i % 2 == 1
        if fake:
            scores = [clip(rng.gauss(0.68, 0.18)) for _ in range(3)]
            means = [clip(rng.gauss(0.55, 0.08)) for _ in range(3)]
            variances = [clip(rng.gauss(0.14, 0.03), 0.0, 0.25) for _ in range(3)]
        else:
            scores = [
                clip(rng.gauss(0.25, 0.12)),
                clip(rng.gauss(0.25, 0.12)),
                clip(rng.gauss(0.40, 0.15)),
            ]
            means = [clip(rng.gauss(0.45, 0.08)) for _ in range(3)]
            variances = [clip(rng.gauss(0.10, 0.03), 0.0, 0.25) for _ in range(3)]
        features.append(scores + means + variances)
        labels.append(1 if fake else 0)
    return features, labels
