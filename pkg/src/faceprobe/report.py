"""Report emission: summary, per-celebrity, demographic, defense
comparison, and cost tables as CSV, JSON, or fixed-width text.

Output is deterministic byte-for-byte for a fixed input: providers,
datasets, and celebrities are emitted in sorted order, and rates are
rounded to one decimal place at print time only, always alongside their
exact numerator and denominator.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from decimal import Decimal
from typing import Iterable

from .errors import ValidationError
from .metrics import EvaluationReport, MetricCell, CelebrityRow, DemographicRow, Rate
from .model import Demographic, MetricConfig, QueryRecord
from .pricing import PricingSchedule


@dataclass(frozen=True)
class DefenseComparisonRow:
    dataset_id: str
    policy: str
    metric: str  # "ta" or "na"
    provider_id: str
    before: Rate
    after: Rate


@dataclass(frozen=True)
class CostRow:
    provider_id: str
    transactions: int
    total_cost: Decimal


@dataclass(frozen=True)
class ReportDocument:
    evaluation: EvaluationReport
    defense_rows: tuple[DefenseComparisonRow, ...] = ()
    cost_rows: tuple[CostRow, ...] = ()


def build_defense_comparison(
    before: EvaluationReport, after: EvaluationReport, policy: str
) -> tuple[DefenseComparisonRow, ...]:
    rows = []
    for key in sorted(set(before.cells) & set(after.cells)):
        provider, dataset = key
        for metric in ("ta", "na"):
            rows.append(DefenseComparisonRow(
                dataset_id=dataset,
                policy=policy,
                metric=metric,
                provider_id=provider,
                before=getattr(before.cells[key], metric),
                after=getattr(after.cells[key], metric),
            ))
    return tuple(rows)


def cost_rows_from_log(
    records: Iterable[QueryRecord], schedule: PricingSchedule | None = None
) -> tuple[CostRow, ...]:
    counts: dict[str, int] = {}
    totals: dict[str, Decimal] = {}
    for rec in records:
        totals[rec.provider_id] = totals.get(rec.provider_id, Decimal(0)) + rec.unit_cost
        if rec.skip_reason is None:
            counts[rec.provider_id] = counts.get(rec.provider_id, 0) + 1
    return tuple(
        CostRow(pid, counts.get(pid, 0), totals[pid]) for pid in sorted(totals)
    )


# ---------------------------------------------------------------------------
# Formatting helpers


def _pct(rate: Rate) -> str:
    value = rate.value
    return "" if value is None else f"{100.0 * value:.1f}"


def _opt(value: float | None, digits: int = 4) -> str:
    return "" if value is None else f"{value:.{digits}f}"


def _rate_doc(rate: Rate) -> dict:
    return {"num": rate.numerator, "den": rate.denominator, "value": rate.value}


def _csv_bytes(header: list[str], rows: list[list]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue().encode("utf-8")


# ---------------------------------------------------------------------------
# CSV tables

_SUMMARY_HEADER = [
    "provider", "dataset", "n_fakes", "n_reals",
    "ta_count", "na_count", "dhf_count", "dhf_den", "dhc_count",
    "dhs_count", "dhs_cr_missed", "sic_count", "sic_den",
    "ta_pct", "na_pct", "dhf_pct", "dhc_pct", "dhs_pct", "sic_pct",
    "ta_relaxed", "fs_missing", "dhf_excluded", "defense_blocked", "skipped",
    "beta", "gamma",
]


def _summary_rows(doc: ReportDocument) -> list[list]:
    config = doc.evaluation.config
    rows = []
    for key in sorted(doc.evaluation.cells):
        c = doc.evaluation.cells[key]
        rows.append([
            c.provider_id, c.dataset_id, c.n_fakes, c.n_reals,
            c.ta.numerator, c.na.numerator, c.dhf.numerator, c.dhf.denominator,
            c.dhc.numerator, c.dhs.numerator, c.dhs_cr_missed,
            c.sic.numerator, c.sic.denominator,
            _pct(c.ta), _pct(c.na), _pct(c.dhf), _pct(c.dhc), _pct(c.dhs), _pct(c.sic),
            c.ta_relaxed, c.fs_missing, c.dhf_excluded, c.defense_blocked, c.skipped,
            config.beta, config.gamma,
        ])
    return rows


_TABLES = {
    "summary": (
        _SUMMARY_HEADER,
        _summary_rows,
    ),
    "celebrities": (
        ["provider", "dataset", "celebrity", "n_fakes", "ta_count", "na_count",
         "mean_fake_confidence", "mean_real_confidence"],
        lambda doc: [
            [r.provider_id, r.dataset_id, r.celebrity, r.n_fakes, r.ta_count,
             r.na_count, _opt(r.mean_fake_confidence), _opt(r.mean_real_confidence)]
            for r in doc.evaluation.celebrity_rows
        ],
    ),
    "demographics": (
        ["provider", "dataset", "tag", "subject_records", "predicted_records"],
        lambda doc: [
            [r.provider_id, r.dataset_id, r.tag.value, r.n_subject_records,
             r.n_predicted_records]
            for r in doc.evaluation.demographic_rows
        ],
    ),
    "defense": (
        ["dataset", "policy", "metric", "provider",
         "before_num", "before_den", "after_num", "after_den",
         "before_pct", "after_pct"],
        lambda doc: [
            [r.dataset_id, r.policy, r.metric, r.provider_id,
             r.before.numerator, r.before.denominator,
             r.after.numerator, r.after.denominator,
             _pct(r.before), _pct(r.after)]
            for r in doc.defense_rows
        ],
    ),
    "cost": (
        ["provider", "transactions", "total_cost"],
        lambda doc: [
            [r.provider_id, r.transactions, str(r.total_cost)] for r in doc.cost_rows
        ],
    ),
}


# ---------------------------------------------------------------------------
# JSON document


def _json_doc(doc: ReportDocument) -> dict:
    ev = doc.evaluation
    return {
        "config": {"beta": ev.config.beta, "gamma": ev.config.gamma},
        "summary": [
            {
                "provider": c.provider_id,
                "dataset": c.dataset_id,
                "n_fakes": c.n_fakes,
                "n_reals": c.n_reals,
                "ta": _rate_doc(c.ta),
                "na": _rate_doc(c.na),
                "dhf": _rate_doc(c.dhf),
                "dhc": _rate_doc(c.dhc),
                "dhs": _rate_doc(c.dhs),
                "dhs_cr_missed": c.dhs_cr_missed,
                "sic": _rate_doc(c.sic),
                "na_classes": c.na_classes,
                "flags": {
                    "ta_relaxed": c.ta_relaxed,
                    "fs_missing": c.fs_missing,
                    "dhf_excluded": c.dhf_excluded,
                    "defense_blocked": c.defense_blocked,
                    "skipped": c.skipped,
                },
            }
            for key in sorted(ev.cells) for c in [ev.cells[key]]
        ],
        "celebrities": [
            {
                "provider": r.provider_id,
                "dataset": r.dataset_id,
                "celebrity": r.celebrity,
                "n_fakes": r.n_fakes,
                "ta_count": r.ta_count,
                "na_count": r.na_count,
                "mean_fake_confidence": r.mean_fake_confidence,
                "mean_real_confidence": r.mean_real_confidence,
            }
            for r in ev.celebrity_rows
        ],
        "demographics": [
            {
                "provider": r.provider_id,
                "dataset": r.dataset_id,
                "tag": r.tag.value,
                "subject_records": r.n_subject_records,
                "predicted_records": r.n_predicted_records,
            }
            for r in ev.demographic_rows
        ],
        "defense": [
            {
                "dataset": r.dataset_id,
                "policy": r.policy,
                "metric": r.metric,
                "provider": r.provider_id,
                "before": _rate_doc(r.before),
                "after": _rate_doc(r.after),
            }
            for r in doc.defense_rows
        ],
        "cost": [
            {
                "provider": r.provider_id,
                "transactions": r.transactions,
                "total_cost": str(r.total_cost),
            }
            for r in doc.cost_rows
        ],
    }


def parse_report_json(data: bytes | str) -> ReportDocument:
    """Rebuild a ReportDocument from emit_report(..., 'json') output."""
    doc = json.loads(data)
    config = MetricConfig(beta=doc["config"]["beta"], gamma=doc["config"]["gamma"])
    cells = {}
    for c in doc["summary"]:
        key = (c["provider"], c["dataset"])
        cells[key] = MetricCell(
            provider_id=c["provider"],
            dataset_id=c["dataset"],
            n_fakes=c["n_fakes"],
            n_reals=c["n_reals"],
            ta=Rate(c["ta"]["num"], c["ta"]["den"]),
            na=Rate(c["na"]["num"], c["na"]["den"]),
            dhf=Rate(c["dhf"]["num"], c["dhf"]["den"]),
            dhc=Rate(c["dhc"]["num"], c["dhc"]["den"]),
            dhs=Rate(c["dhs"]["num"], c["dhs"]["den"]),
            dhs_cr_missed=c["dhs_cr_missed"],
            sic=Rate(c["sic"]["num"], c["sic"]["den"]),
            na_classes=dict(c["na_classes"]),
            ta_relaxed=c["flags"]["ta_relaxed"],
            fs_missing=c["flags"]["fs_missing"],
            dhf_excluded=c["flags"]["dhf_excluded"],
            defense_blocked=c["flags"]["defense_blocked"],
            skipped=c["flags"]["skipped"],
        )
    celebs = tuple(
        CelebrityRow(
            provider_id=r["provider"], dataset_id=r["dataset"],
            celebrity=r["celebrity"], n_fakes=r["n_fakes"],
            ta_count=r["ta_count"], na_count=r["na_count"],
            mean_fake_confidence=r["mean_fake_confidence"],
            mean_real_confidence=r["mean_real_confidence"],
        )
        for r in doc.get("celebrities", [])
    )
    demos = tuple(
        DemographicRow(
            provider_id=r["provider"], dataset_id=r["dataset"],
            tag=Demographic(r["tag"]),
            n_subject_records=r["subject_records"],
            n_predicted_records=r["predicted_records"],
        )
        for r in doc.get("demographics", [])
    )
    defense = tuple(
        DefenseComparisonRow(
            dataset_id=r["dataset"], policy=r["policy"], metric=r["metric"],
            provider_id=r["provider"],
            before=Rate(r["before"]["num"], r["before"]["den"]),
            after=Rate(r["after"]["num"], r["after"]["den"]),
        )
        for r in doc.get("defense", [])
    )
    cost = tuple(
        CostRow(r["provider"], r["transactions"], Decimal(r["total_cost"]))
        for r in doc.get("cost", [])
    )
    return ReportDocument(
        evaluation=EvaluationReport(
            config=config, cells=cells, celebrity_rows=celebs, demographic_rows=demos
        ),
        defense_rows=defense,
        cost_rows=cost,
    )


# ---------------------------------------------------------------------------
# Text tables

_METRIC_SECTIONS = [
    ("TA  - targeted attack success", "ta"),
    ("NA  - non-targeted attack success", "na"),
    ("DHF - fakes beating the real image's confidence", "dhf"),
    ("DHC - fakes recognized above beta", "dhc"),
    ("DHS - unrecognized fakes above gamma similarity", "dhs"),
    ("SIC - celebrities with at least one impersonation", "sic"),
]


def _text_table(doc: ReportDocument) -> bytes:
    ev = doc.evaluation
    providers = sorted({p for p, _ in ev.cells})
    datasets = sorted({d for _, d in ev.cells})
    out = io.StringIO()
    out.write(f"thresholds: beta={ev.config.beta} gamma={ev.config.gamma}\n")
    width = max([9] + [len(d) for d in datasets]) + 2
    for title, attr in _METRIC_SECTIONS:
        out.write(f"\n{title} (% of denominator; counts in the summary CSV)\n")
        out.write(" " * width + "".join(f"{p:>10}" for p in providers) + "\n")
        for dataset in datasets:
            out.write(f"{dataset:<{width}}")
            for provider in providers:
                cell = ev.cells.get((provider, dataset))
                text = _pct(getattr(cell, attr)) if cell else ""
                out.write(f"{text or '-':>10}")
            out.write("\n")
    if doc.defense_rows:
        out.write("\ndefense: before -> after (%)\n")
        for r in doc.defense_rows:
            out.write(
                f"  {r.dataset_id} {r.policy} {r.metric.upper()} {r.provider_id}: "
                f"{_pct(r.before) or '-'} -> {_pct(r.after) or '-'}\n"
            )
    if doc.cost_rows:
        out.write("\ncost\n")
        for r in doc.cost_rows:
            out.write(f"  {r.provider_id}: {r.transactions} transactions, ${r.total_cost}\n")
    return out.getvalue().encode("utf-8")


def emit_report(doc: ReportDocument, fmt: str, table: str = "summary") -> bytes:
    """Render the document; byte-identical output for identical input."""
    if fmt == "json":
        return (json.dumps(_json_doc(doc), indent=2, ensure_ascii=False) + "\n").encode("utf-8")
    if fmt == "csv":
        if table not in _TABLES:
            raise ValidationError(f"unknown table {table!r}; one of {sorted(_TABLES)}")
        header, rows_fn = _TABLES[table]
        return _csv_bytes(header, rows_fn(doc))
    if fmt == "table":
        return _text_table(doc)
    raise ValidationError(f"unknown format {fmt!r}; one of csv, json, table")
