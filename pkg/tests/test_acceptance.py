"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines.
"""

import json
import math
import random
import time
from decimal import Decimal

import numpy as np
import pytest

from faceprobe.campaign import (
    CampaignConfig,
    CampaignMode,
    FsPolicy,
    run_campaign,
)
from faceprobe.combiner import CombinerHyper, CombinerModel, dd3_train, init_model, loss_gradients, loss_value
from faceprobe.defense import (
    Decision,
    DefenseMode,
    DefensePolicy,
    dd1_admit,
    dd2_admit,
    decide_probe,
    defended_campaign,
    updated_success_rate,
)
from faceprobe.detectors import FixedRatesScorer, InProcessChannel
from faceprobe.manifest import build_manifest
from faceprobe.metrics import MetricConfig, aggregate, classify_na_outcome, NaOutcome
from faceprobe.model import (
    Demographic,
    GenMethod,
    ProbeImage,
    ProbeKind,
    normalize_identity,
)
from faceprobe.pricing import default_pricing, estimate_cost
from faceprobe.providers import GalleryEntry, ProviderProfile, SimulatedBackend, build_gallery
from faceprobe.ratelimit import RateLimiter, SimulatedClock

from brute_oracle import brute_force_cells
from generators import gen_log, gen_manifest, gen_overlap_benchmark
from test_metrics import _cell_to_dict


def _verdict(number: int, name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    line = f"[criterion {number:2d}] {name}: {status}"
    if detail and not ok:
        line += f" ({detail})"
    print(line)
    assert ok, detail or name


def test_c01_metric_engine_equals_brute_force_oracle():
    """500 random query logs: aggregate must equal the independent
    brute-force enumeration exactly, within the runtime budget."""
    start = time.monotonic()
    mismatches = []
    config = MetricConfig()
    for seed in range(500):
        rng = random.Random(seed)
        manifest = gen_manifest(rng, n_celebs=3, n_real_per=1, n_fakes=10)
        records = gen_log(rng, manifest, ["aws", "nav"])
        report = aggregate(records, manifest, config)
        expected = brute_force_cells(records, manifest, config.beta, config.gamma)
        if set(report.cells) != set(expected):
            mismatches.append((seed, "cell keys"))
            continue
        for key, cell in report.cells.items():
            if _cell_to_dict(cell) != expected[key]:
                mismatches.append((seed, key))
    elapsed = time.monotonic() - start
    _verdict(1, "metric-oracle equivalence on 500 random logs",
             not mismatches and elapsed < 10.0,
             f"mismatches={mismatches[:3]} elapsed={elapsed:.1f}s")


def test_c02_ta_subset_na_and_outcome_partition():
    from faceprobe.metrics import Aggregator, PairedOutcome, eval_nontargeted, eval_targeted
    from faceprobe.model import RequestKind

    checked = 0
    violations = []
    for seed in range(250):
        rng = random.Random(1000 + seed)
        manifest = gen_manifest(rng, n_celebs=4, n_fakes=30)
        records = gen_log(rng, manifest, ["aws", "ms"])
        agg = Aggregator()
        for rec in records:
            agg.add(rec)
        for (provider, probe_id), rec in agg._cr.items():
            probe = manifest.probe(probe_id)
            if not probe.is_fake:
                continue
            outcome = agg._outcome(provider, probe, rec, manifest)
            checked += 1
            ta = eval_targeted(outcome)
            na = eval_nontargeted(outcome.fake_record)
            if ta and not na:
                violations.append((seed, probe_id, "TA without NA"))
            cls = classify_na_outcome(outcome)
            if na != (cls is not NaOutcome.NO_MATCH):
                violations.append((seed, probe_id, "class/NA disagreement"))
    _verdict(2, f"TA=>NA and outcome partition over {checked} fake records",
             checked >= 10_000 and not violations,
             f"checked={checked} violations={violations[:3]}")


def test_c03_threshold_monotonicity():
    rng = random.Random(77)
    manifest = gen_manifest(rng, n_celebs=5, n_fakes=60)
    records = gen_log(rng, manifest, ["aws"])
    grid = [float(v) for v in range(0, 101, 10)]
    dhc, dhs = [], []
    for threshold in grid:
        cell = aggregate(records, manifest,
                         MetricConfig(beta=threshold, gamma=threshold)).cells[("aws", "synth")]
        dhc.append(cell.dhc.numerator)
        dhs.append(cell.dhs.numerator)
    ok = dhc == sorted(dhc, reverse=True) and dhs == sorted(dhs, reverse=True)
    _verdict(3, "DHC(beta) and DHS(gamma) counts nonincreasing on the grid",
             ok, f"dhc={dhc} dhs={dhs}")


# Published defended-rate table rows that the multiplicative model must
# reproduce: (dataset, detector, accuracy, attack, provider, before%, after%).
_RATE_TABLE = [
    ("FCelebDF", "Xception", 0.897, [
        ("ta", "aws", 11.3, 1.16), ("ta", "ms", 5.90, 0.60), ("ta", "nav", 5.20, 0.54),
        ("na", "aws", 34.4, 3.54), ("na", "ms", 7.20, 0.74), ("na", "nav", 98.6, 10.2),
    ]),
    ("FCelebDF", "CLRNet", 0.979, [
        ("ta", "aws", 11.3, 0.23), ("ta", "ms", 5.90, 0.12), ("ta", "nav", 5.20, 0.10),
        ("na", "aws", 34.4, 0.69), ("na", "ms", 7.20, 0.14), ("na", "nav", 98.6, 1.98),
    ]),
    ("CelebDF", "ABNet", 0.999, [
        ("ta", "aws", 10.7, 0.01), ("ta", "ms", 21.3, 0.02), ("ta", "nav", 2.10, 0.00),
        ("na", "aws", 42.5, 0.04), ("na", "ms", 24.4, 0.02), ("na", "nav", 99.8, 0.10),
    ]),
    ("CelebFOM", "ShallowNet", 0.855, [
        ("ta", "aws", 47.5, 6.89), ("ta", "ms", 58.3, 8.45), ("ta", "nav", 2.60, 0.38),
        ("na", "aws", 65.0, 9.43), ("na", "ms", 60.3, 8.74), ("na", "nav", 99.8, 14.5),
    ]),
]


def test_c04_defended_rate_arithmetic_reproduces_published_rows():
    failures = []
    for dataset, detector, accuracy, pairs in _RATE_TABLE:
        fnr = 1.0 - accuracy
        for attack, provider, before_pct, after_pct in pairs:
            got_pct = 100.0 * updated_success_rate(before_pct / 100.0, fnr)
            if abs(got_pct - after_pct) > 0.05:
                failures.append(
                    f"{dataset}/{detector} {attack}/{provider}: "
                    f"{before_pct}% -> computed {got_pct:.4f}%, published {after_pct}%"
                )
    _verdict(4, "published defended-rate pairs within 0.05pp (24 pairs)",
             not failures, "; ".join(failures))


def _tuned_manifest_and_backend(raw_na_rate: float, n_fakes: int):
    """Simulated provider tuned so the raw non-targeted rate is exactly
    ``raw_na_rate``: strong fakes land on their gallery target with full
    fidelity, weak fakes target identities whose demographic bias zeroes
    their score below the report threshold."""
    strong = [normalize_identity(f"strong {i}", Demographic.WHITE) for i in range(4)]
    weak = [normalize_identity(f"weak {i}", Demographic.ASIAN) for i in range(4)]
    probes = []
    for i, celeb in enumerate(strong + weak):
        probes.append(ProbeImage(f"real-{i}", f"mem://real/{i}", ProbeKind.REAL,
                                 GenMethod.NOT_APPLICABLE, "tuned", target=celeb))
    n_strong = round(raw_na_rate * n_fakes)
    for k in range(n_fakes):
        pool = strong if k < n_strong else weak
        target = pool[k % 4]
        reference = pool[(k + 1) % 4]
        probes.append(ProbeImage(f"fake-{k:05d}", f"mem://fake/{k}", ProbeKind.FAKE,
                                 GenMethod.REENACTMENT, "tuned",
                                 target=target, reference=reference))
    manifest = build_manifest("tuned", "rate-tuned dataset", probes)
    gallery = build_gallery(sorted(manifest.identities.values(),
                                   key=lambda i: i.canonical_name), dim=64, seed=5)
    profile = ProviderProfile(
        provider_id="sim", report_threshold=60.0, gallery=gallery,
        bias_weights={Demographic.ASIAN: 0.0}, rng_seed=5, noise_scale=0.0,
        fidelity={GenMethod.REENACTMENT: 1.0},
    )
    return manifest, SimulatedBackend(profile)


def test_c05_defended_campaign_matches_closed_form():
    n = 10_000
    start = time.monotonic()
    failures = []
    config = CampaignConfig(provider_ids=("sim",), mode=CampaignMode.SIMULATED,
                            fs_policy=FsPolicy.NEVER)
    for raw, fnr in [(0.986, 0.021), (0.5, 0.1), (1.0, 0.0)]:
        manifest, backend = _tuned_manifest_and_backend(raw, n)

        raw_cell = aggregate(run_campaign(manifest, {"sim": backend}, config),
                             manifest).cells[("sim", "tuned")]
        if raw_cell.na.value != pytest.approx(raw, abs=1e-12):
            failures.append(f"raw rate {raw_cell.na.value} != tuned {raw}")
            continue

        channels = [InProcessChannel(
            "d1", FixedRatesScorer(manifest, "d1", fnr=fnr, fpr=0.0, seed=11)
        )]
        records, _ = defended_campaign(
            manifest, {"sim": backend}, DefensePolicy(DefenseMode.DD1, ("d1",)),
            config, channels,
        )
        cell = aggregate(records, manifest).cells[("sim", "tuned")]
        defended_na = cell.na.value
        expected = raw * fnr
        sigma = math.sqrt(expected * (1.0 - expected) / n)
        if abs(defended_na - expected) > 3 * sigma + 1e-12:
            failures.append(
                f"(r={raw}, f={fnr}): defended NA {defended_na:.5f}, "
                f"expected {expected:.5f} +- {3 * sigma:.5f}"
            )
        if cell.n_fakes != n:
            failures.append(f"(r={raw}, f={fnr}): denominator {cell.n_fakes} != {n}")
    elapsed = time.monotonic() - start
    _verdict(5, "defended NA within 3-sigma of raw*fnr at 10^4 fakes",
             not failures and elapsed < 30.0,
             "; ".join(failures) + f" elapsed={elapsed:.1f}s")


def test_c06_dd2_and_gate():
    n = 10_000
    target = normalize_identity("t")
    reference = normalize_identity("r")
    probes = [
        ProbeImage(f"f{i:05d}", f"mem://{i}", ProbeKind.FAKE, GenMethod.REPLACEMENT,
                   "bulk", target=target, reference=reference, no_real_reference=True)
        for i in range(n)
    ]
    manifest = build_manifest("bulk", "", probes)
    fnrs = (0.3, 0.25, 0.2)
    policy = DefensePolicy(DefenseMode.DD2, ("d1", "d2", "d3"))
    channels = [
        InProcessChannel(f"d{i+1}", FixedRatesScorer(manifest, f"d{i+1}", fnr=f, seed=17))
        for i, f in enumerate(fnrs)
    ]
    admitted = sum(
        decide_probe(policy, channels, p).decision is Decision.ADMIT for p in probes
    )
    expected = fnrs[0] * fnrs[1] * fnrs[2]
    sigma = math.sqrt(expected * (1 - expected) / n)
    gate_ok = abs(admitted / n - expected) <= 3 * sigma

    rng = random.Random(12)
    and_ok = True
    for _ in range(500):
        triple = [type(channels[0].score(probes[0]))(f"d{i}", rng.random()) for i in range(3)]
        threshold = rng.random()
        anded = all(dd1_admit(s, threshold) is Decision.ADMIT for s in triple)
        if (dd2_admit(triple, threshold) is Decision.ADMIT) != anded:
            and_ok = False
            break
    _verdict(6, "DD2 pass rate = f1*f2*f3 within 3-sigma; DD2 == AND of DD1",
             gate_ok and and_ok,
             f"admitted={admitted / n:.4f} expected={expected:.4f} and_ok={and_ok}")


def test_c07_combiner_gradients_and_stacking_advantage():
    rng = np.random.default_rng(123)
    worst = 0.0
    for _ in range(100):
        d, h = int(rng.integers(2, 12)), int(rng.integers(2, 10))
        model = init_model(d, h, seed=int(rng.integers(0, 2**31)))
        x = rng.normal(size=(12, d))
        y = (rng.random(12) > 0.5).astype(float)
        l2 = float(rng.choice([0.0, 1e-4, 1e-2]))
        analytic = loss_gradients(model, x, y, l2).flatten()
        theta = model.flatten()
        numeric = np.zeros_like(theta)
        step = 1e-5
        for i in range(theta.size):
            plus, minus = theta.copy(), theta.copy()
            plus[i] += step
            minus[i] -= step
            numeric[i] = (
                loss_value(CombinerModel.unflatten(plus, d, h), x, y, l2)
                - loss_value(CombinerModel.unflatten(minus, d, h), x, y, l2)
            ) / (2 * step)
        denom = np.maximum(1e-6, np.maximum(np.abs(analytic), np.abs(numeric)))
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))

    bench_rng = random.Random(2024)
    X, y = gen_overlap_benchmark(bench_rng, 4000)
    X, y = np.array(X), np.array(y)
    train_x, train_y, test_x, test_y = X[:2000], y[:2000], X[2000:], y[2000:]
    and_gate_acc = float(((test_x[:, :3] >= 0.5).any(axis=1).astype(float) == test_y).mean())
    model = dd3_train(train_x, train_y,
                      CombinerHyper(hidden=16, learning_rate=0.5, epochs=400, seed=7)).model
    stacked_acc = float(((model.predict_proba(test_x) >= 0.5).astype(float) == test_y).mean())
    _verdict(7, "gradient check < 1e-4 over 100 draws; stacking beats AND-gate",
             worst < 1e-4 and stacked_acc > and_gate_acc,
             f"worst_rel_err={worst:.2e} stacked={stacked_acc:.3f} gate={and_gate_acc:.3f}")


def test_c08_cost_model_golden_table():
    schedule = default_pricing()
    M = 1_000_000
    golden = {
        ("aws", 1_000): "1.00", ("ms", 1_000): "1.00", ("nav", 1_000): "1.00",
        ("ms-free", 30_000): "0.00",
        ("aws", 2 * M): "1800.00", ("aws", 15 * M): "11200.00", ("aws", 150 * M): "82200.00",
        ("ms", 2 * M): "1800.00", ("ms", 15 * M): "10200.00", ("ms", 150 * M): "81200.00",
        ("nav", 2 * M): "1500.00", ("nav", 15 * M): "8000.00", ("nav", 150 * M): "65500.00",
        ("ms-free", 2 * M): "1776.00", ("ms-free", 15 * M): "10182.00",
        ("ms-free", 150 * M): "81188.00",
    }
    failures = [
        f"{pid}@{tx}: {estimate_cost(schedule, pid, tx)} != {want}"
        for (pid, tx), want in sorted(golden.items())
        if estimate_cost(schedule, pid, tx) != Decimal(want)
    ]
    _verdict(8, "marginal cost golden table exact to the cent", not failures,
             "; ".join(failures))


def test_c09_rate_limit_schedule():
    clock = SimulatedClock()
    limiter = RateLimiter(1, 0.3, clock)
    observed = [limiter.acquire() for _ in range(10)]
    failures = []
    for i, got in enumerate(observed):
        want = i / 0.3
        if want == 0.0:
            if abs(got) > 1e-9:
                failures.append(f"req0 at {got}")
        elif abs(got - want) / want > 0.05:
            failures.append(f"req{i} at {got:.3f} vs {want:.3f}")
    _verdict(9, "token-bucket admissions match the analytic schedule", not failures,
             "; ".join(failures))


def test_c10_end_to_end_determinism(tmp_path, tiny_manifest):
    from faceprobe.cli import main
    from faceprobe.manifest import serialize_manifest

    manifest_path = tmp_path / "m.json"
    manifest_path.write_bytes(serialize_manifest(tiny_manifest))

    def run(tag: str) -> tuple[bytes, bytes, bytes]:
        log = tmp_path / f"log-{tag}.jsonl"
        report = tmp_path / f"report-{tag}.json"
        table = tmp_path / f"table-{tag}.csv"
        assert main(["--seed", "42", "campaign", str(manifest_path),
                     "--providers", "aws,ms,nav", "--out", str(log)]) == 0
        assert main(["metrics", str(log), "--manifest", str(manifest_path),
                     "--out", str(report)]) == 0
        assert main(["report", str(report), "--format", "csv",
                     "--out", str(table)]) == 0
        return log.read_bytes(), report.read_bytes(), table.read_bytes()

    first, second = run("a"), run("b")
    _verdict(10, "simulated campaign + metrics + report byte-identical",
             first == second)
