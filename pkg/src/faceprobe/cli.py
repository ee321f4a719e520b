"""Command-line surface.

Subcommands: validate, campaign, metrics, defend, train-combiner, cost,
report. Exit codes: 0 success, 1 validation failure, 2 runtime/usage error.
All randomness is controlled by --seed.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from pathlib import Path

import numpy as np

from . import campaign as camp
from .combiner import CombinerHyper, dd3_train, load_model, save_model
from .defense import DefenseMode, DefensePolicy, defended_campaign
from .detectors import (
    ConstantScorer,
    FixedRatesScorer,
    InProcessChannel,
    OracleScorer,
    SubprocessChannel,
)
from .errors import FaceprobeError, ManifestError, ValidationError
from .manifest import DatasetManifest, load_manifest
from .metrics import MetricConfig, aggregate
from .model import Demographic, GenMethod
from .pricing import default_pricing, estimate_cost, load_pricing
from .providers import (
    LiveBackend,
    LiveEndpoint,
    LiveProviderConfig,
    ProviderProfile,
    ReplayBackend,
    SimulatedBackend,
    build_gallery,
    load_cassette,
)
from .report import ReportDocument, cost_rows_from_log, emit_report, parse_report_json

# Report thresholds modeled on observed provider behavior: one permissive
# provider that always answers, one conservative. Simulator defaults only.
_DEFAULT_THRESHOLDS = {"aws": 55.0, "ms": 70.0, "ms-free": 70.0, "nav": 0.0}


def _build_profiles(
    manifest: DatasetManifest, provider_ids: list[str], seed: int, profiles_path: str | None
) -> dict[str, ProviderProfile]:
    overrides = {}
    if profiles_path:
        overrides = json.loads(Path(profiles_path).read_text(encoding="utf-8"))
    profiles = {}
    for pid in provider_ids:
        spec = overrides.get(pid, {})
        gallery = build_gallery(
            sorted(manifest.identities.values(), key=lambda i: i.canonical_name),
            dim=int(spec.get("dim", 64)),
            seed=int(spec.get("gallery_seed", seed)),
        )
        bias = {
            Demographic(tag): float(w) for tag, w in spec.get("bias_weights", {}).items()
        }
        fidelity = {
            GenMethod(m): float(w) for m, w in spec.get("fidelity", {}).items()
        }
        profiles[pid] = ProviderProfile(
            provider_id=pid,
            report_threshold=float(
                spec.get("report_threshold", _DEFAULT_THRESHOLDS.get(pid, 50.0))
            ),
            gallery=gallery,
            bias_weights=bias,
            rng_seed=int(spec.get("rng_seed", seed)),
            noise_scale=float(spec.get("noise_scale", 0.05)),
            fidelity=fidelity,
        )
    return profiles


def _build_backends(args, manifest: DatasetManifest, provider_ids: list[str]):
    mode = camp.CampaignMode(args.mode)
    if mode is camp.CampaignMode.SIMULATED:
        profiles = _build_profiles(manifest, provider_ids, args.seed, args.profiles)
        return {pid: SimulatedBackend(profiles[pid]) for pid in provider_ids}
    if mode is camp.CampaignMode.REPLAY:
        if not args.cassette:
            raise ValidationError("replay mode requires --cassette")
        cassette = load_cassette(args.cassette)
        return {pid: ReplayBackend(pid, cassette) for pid in provider_ids}
    if not args.live_config:
        raise ValidationError("live mode requires --live-config")
    raw = json.loads(Path(args.live_config).read_text(encoding="utf-8"))
    backends = {}
    for pid in provider_ids:
        if pid not in raw:
            raise ValidationError(f"no live configuration for provider {pid!r}")
        spec = raw[pid]
        backends[pid] = LiveBackend(LiveProviderConfig(
            provider_id=pid,
            recognition=LiveEndpoint(**spec["recognition"]),
            similarity=LiveEndpoint(**spec["similarity"]) if "similarity" in spec else None,
            headers=spec.get("headers", {}),
            timeout_s=float(spec.get("timeout_s", 30.0)),
        ))
    return backends


def _campaign_config(args, provider_ids: list[str]) -> camp.CampaignConfig:
    return camp.CampaignConfig(
        provider_ids=tuple(provider_ids),
        mode=camp.CampaignMode(args.mode),
        fs_policy=camp.FsPolicy(args.fs_policy),
        max_in_flight=args.max_in_flight,
        default_rate=camp.RateSpec(capacity=args.rate_capacity, refill_per_s=args.rate_refill),
        rng_seed=args.seed,
    )


def _pricing(args):
    return load_pricing(args.pricing) if getattr(args, "pricing", None) else default_pricing()


def _write_or_print(data: bytes, out: str | None) -> None:
    if out:
        Path(out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_validate(args) -> int:
    manifest = load_manifest(args.manifest)
    counts = manifest.counts
    print(
        f"{manifest.dataset_id}: OK "
        f"({counts.n_real} real, {counts.n_fake} fake, {counts.n_celebrities} celebrities)"
    )
    return 0


def cmd_campaign(args) -> int:
    manifest = load_manifest(args.manifest)
    provider_ids = args.providers.split(",")
    backends = _build_backends(args, manifest, provider_ids)
    if args.record:
        from .providers import CassetteRecorder, RecordingBackend

        recorder = CassetteRecorder(args.record)
        backends = {pid: RecordingBackend(b, recorder) for pid, b in backends.items()}
    records = camp.run_campaign(manifest, backends, _campaign_config(args, provider_ids),
                                pricing=_pricing(args))
    camp.write_query_log(records, args.out)
    skips = sum(1 for r in records if r.is_skip)
    print(f"wrote {len(records)} records to {args.out} ({skips} skipped)")
    return 0


def cmd_metrics(args) -> int:
    manifest = load_manifest(args.manifest)
    records = camp.read_query_log(args.querylog)
    report = aggregate(records, manifest, MetricConfig(beta=args.beta, gamma=args.gamma))
    doc = ReportDocument(evaluation=report, cost_rows=cost_rows_from_log(records))
    _write_or_print(emit_report(doc, args.format), args.out)
    return 0


def _parse_detector(spec: str, index: int, manifest: DatasetManifest, seed: int):
    detector_id = f"det{index + 1}"
    if spec == "oracle":
        return InProcessChannel(detector_id, OracleScorer(manifest))
    if spec.startswith("const:"):
        return InProcessChannel(detector_id, ConstantScorer(float(spec[6:])))
    if spec.startswith("fixed:"):
        params = dict(
            part.split("=", 1) for part in spec[6:].split(",") if part
        )
        return InProcessChannel(detector_id, FixedRatesScorer(
            manifest,
            detector_id,
            fnr=float(params.get("fnr", 0.0)),
            fpr=float(params.get("fpr", 0.0)),
            seed=int(params.get("seed", seed)),
        ))
    if spec.startswith("cmd:"):
        return SubprocessChannel(shlex.split(spec[4:]))
    raise ValidationError(
        f"bad detector spec {spec!r}; expected oracle, const:P, "
        "fixed:fnr=F,fpr=F,seed=N, or cmd:COMMAND"
    )


def cmd_defend(args) -> int:
    manifest = load_manifest(args.manifest)
    provider_ids = args.providers.split(",")
    backends = _build_backends(args, manifest, provider_ids)
    channels = [
        _parse_detector(spec, i, manifest, args.seed)
        for i, spec in enumerate(args.detector)
    ]
    combiner = load_model(args.combiner) if args.combiner else None
    policy = DefensePolicy(
        mode=DefenseMode(args.policy),
        detector_ids=tuple(ch.detector_id or f"det{i+1}" for i, ch in enumerate(channels)),
        decision_threshold=args.threshold,
        combiner=combiner,
    )
    try:
        records, defense_log = defended_campaign(
            manifest, backends, policy, _campaign_config(args, provider_ids), channels,
            pricing=_pricing(args),
        )
    finally:
        for ch in channels:
            if isinstance(ch, SubprocessChannel):
                ch.close()
    camp.write_query_log(records, args.out)
    if args.defense_out:
        with open(args.defense_out, "w", encoding="utf-8") as fh:
            for entry in defense_log:
                fh.write(json.dumps({
                    "probe_id": entry.probe_id,
                    "decision": entry.decision.value,
                    "rule": entry.rule,
                    "scores": [
                        {"detector_id": s.detector_id, "p_fake": s.p_fake}
                        for s in entry.scores
                    ],
                    "combined_p": entry.combined_p,
                }, ensure_ascii=False) + "\n")
    blocked = sum(1 for e in defense_log if e.decision.value == "block")
    print(f"wrote {len(records)} records to {args.out} ({blocked} probes blocked)")
    return 0


def cmd_train_combiner(args) -> int:
    features, labels = [], []
    with open(args.rows, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            features.append(row["features"])
            labels.append(row["label"])
    result = dd3_train(
        np.asarray(features, dtype=float),
        np.asarray(labels, dtype=float),
        CombinerHyper(hidden=args.hidden, learning_rate=args.lr, epochs=args.epochs,
                      seed=args.seed, l2=args.l2),
    )
    save_model(result, args.out)
    print(f"trained on {len(labels)} rows; final loss {result.final_loss:.6f} -> {args.out}")
    return 0


def cmd_cost(args) -> int:
    schedule = load_pricing(args.schedule) if args.schedule else default_pricing()
    print(estimate_cost(schedule, args.provider, args.tx))
    return 0


def cmd_report(args) -> int:
    doc = parse_report_json(Path(args.results).read_bytes())
    _write_or_print(emit_report(doc, args.format, table=args.table), args.out)
    return 0


# ---------------------------------------------------------------------------


def _add_campaign_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--providers", default="aws,ms,nav",
                   help="comma-separated provider ids")
    p.add_argument("--mode", choices=["live", "replay", "simulated"], default="simulated")
    p.add_argument("--fs-policy", choices=["on_cr_miss", "never", "always"],
                   default="on_cr_miss")
    p.add_argument("--cassette", help="cassette file (replay mode)")
    p.add_argument("--record", help="append provider responses to this cassette")
    p.add_argument("--profiles", help="simulated provider profile overrides (JSON)")
    p.add_argument("--live-config", help="live provider endpoints and field mappings (JSON)")
    p.add_argument("--pricing", help="pricing schedule JSON (defaults to list prices)")
    p.add_argument("--max-in-flight", type=int, default=4)
    p.add_argument("--rate-capacity", type=float, default=5.0)
    p.add_argument("--rate-refill", type=float, default=5.0)
    p.add_argument("--out", required=True, help="query log output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="faceprobe",
        description="Measure face-recognition web APIs against deepfake probes "
                    "and gate them behind a detector ensemble.",
    )
    parser.add_argument("--seed", type=int, default=0, help="controls all randomness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a dataset manifest")
    p.add_argument("manifest")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("campaign", help="run the query protocol over a manifest")
    p.add_argument("manifest")
    _add_campaign_options(p)
    p.set_defaults(fn=cmd_campaign)

    p = sub.add_parser("metrics", help="aggregate a query log into a report")
    p.add_argument("querylog")
    p.add_argument("--manifest", required=True)
    p.add_argument("--beta", type=float, default=90.0)
    p.add_argument("--gamma", type=float, default=80.0)
    p.add_argument("--format", choices=["json", "csv", "table"], default="json")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_metrics)

    p = sub.add_parser("defend", help="run a campaign behind the detector gateway")
    p.add_argument("manifest")
    p.add_argument("--policy", choices=["dd1", "dd2", "dd3"], required=True)
    p.add_argument("--detector", action="append", required=True,
                   help="oracle | const:P | fixed:fnr=F,fpr=F,seed=N | cmd:COMMAND "
                        "(repeat once for dd1, three times for dd2/dd3)")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--combiner", help="trained combiner model (dd3)")
    p.add_argument("--defense-out", help="defense decision log output path")
    _add_campaign_options(p)
    p.set_defaults(fn=cmd_defend)

    p = sub.add_parser("train-combiner", help="train the dd3 stacking combiner")
    p.add_argument("rows", help="JSONL rows: {\"features\": [...], \"label\": 0|1}")
    p.add_argument("--out", required=True)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--l2", type=float, default=1e-4)
    p.set_defaults(fn=cmd_train_combiner)

    p = sub.add_parser("cost", help="estimate monthly transaction cost")
    p.add_argument("--provider", required=True)
    p.add_argument("--tx", type=int, required=True)
    p.add_argument("--schedule", help="pricing schedule JSON")
    p.set_defaults(fn=cmd_cost)

    p = sub.add_parser("report", help="re-emit a metrics JSON report")
    p.add_argument("results", help="JSON report produced by the metrics command")
    p.add_argument("--format", choices=["json", "csv", "table"], default="table")
    p.add_argument("--table",
                   choices=["summary", "celebrities", "demographics", "defense", "cost"],
                   default="summary")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ManifestError, ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FaceprobeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
