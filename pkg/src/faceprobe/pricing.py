"""Tiered usage-based pricing for provider transactions.

Default billing is marginal (graduated): each transaction is priced by the
tier it falls into, after any monthly free allowance is consumed. A flat
mode (whole volume priced at the tier the total lands in) is available
behind a flag because published tier tables do not always say which
convention they use.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from .errors import ValidationError

CENT = Decimal("0.01")


@dataclass(frozen=True)
class Tier:
    upper_bound: int | None  # transactions/month up to which this rate applies; None = unbounded
    price_per_1000: Decimal


@dataclass(frozen=True)
class ProviderTerms:
    provider_id: str
    tiers: tuple[Tier, ...]
    free_allowance: int = 0
    billing: str = "marginal"  # or "flat"

    def __post_init__(self):
        if not self.tiers:
            raise ValidationError(f"{self.provider_id}: at least one tier required")
        prev = 0
        for i, t in enumerate(self.tiers):
            if t.upper_bound is None:
                if i != len(self.tiers) - 1:
                    raise ValidationError(
                        f"{self.provider_id}: only the last tier may be unbounded"
                    )
            elif t.upper_bound <= prev:
                raise ValidationError(
                    f"{self.provider_id}: tier bounds must be strictly increasing"
                )
            else:
                prev = t.upper_bound
        if any(t.price_per_1000 < 0 for t in self.tiers):
            raise ValidationError(f"{self.provider_id}: prices must be nonnegative")
        if self.billing not in ("marginal", "flat"):
            raise ValidationError(f"{self.provider_id}: billing must be marginal or flat")


@dataclass(frozen=True)
class PricingSchedule:
    providers: dict[str, ProviderTerms] = field(default_factory=dict)
    fallback: ProviderTerms | None = None

    def terms_for(self, provider_id: str) -> ProviderTerms:
        terms = self.providers.get(provider_id, self.fallback)
        if terms is None:
            raise ValidationError(f"unknown provider {provider_id!r} in pricing schedule")
        return terms


def estimate_cost(schedule: PricingSchedule, provider_id: str, transactions: int) -> Decimal:
    """Monthly cost in dollars for ``transactions`` requests, to the cent."""
    if transactions < 0:
        raise ValidationError("transaction count must be nonnegative")
    terms = schedule.terms_for(provider_id)
    return _cost(terms, transactions).quantize(CENT, rounding=ROUND_HALF_UP)


def _cost(terms: ProviderTerms, transactions: int) -> Decimal:
    billable = max(0, transactions - terms.free_allowance)
    if billable == 0:
        return Decimal(0)
    if terms.billing == "flat":
        return Decimal(billable) * _rate_at(terms, billable) / 1000
    total = Decimal(0)
    prev = 0
    for tier in terms.tiers:
        upper = billable if tier.upper_bound is None else min(billable, tier.upper_bound)
        if upper <= prev:
            break
        total += Decimal(upper - prev) * tier.price_per_1000 / 1000
        prev = upper
    if prev < billable:  # volume beyond the last bounded tier
        total += Decimal(billable - prev) * terms.tiers[-1].price_per_1000 / 1000
    return total


def _rate_at(terms: ProviderTerms, transactions: int) -> Decimal:
    for tier in terms.tiers:
        if tier.upper_bound is None or transactions <= tier.upper_bound:
            return tier.price_per_1000
    return terms.tiers[-1].price_per_1000


def unit_cost(terms: ProviderTerms, transaction_number: int) -> Decimal:
    """Cost of the Nth transaction of the month (1-based): the marginal
    difference, so per-record costs always sum to the schedule total.
    Under flat billing the difference can be negative at a tier boundary
    (the whole volume gets cheaper); the telescoped sum stays exact."""
    if transaction_number < 1:
        raise ValidationError("transaction_number is 1-based")
    return _cost(terms, transaction_number) - _cost(terms, transaction_number - 1)


class CostMeter:
    """Running per-provider transaction counter used during a campaign."""

    def __init__(self, schedule: PricingSchedule):
        self._schedule = schedule
        self._counts: dict[str, int] = {}

    def charge(self, provider_id: str) -> Decimal:
        terms = self._schedule.terms_for(provider_id)
        n = self._counts.get(provider_id, 0) + 1
        self._counts[provider_id] = n
        return unit_cost(terms, n)

    def transactions(self, provider_id: str) -> int:
        return self._counts.get(provider_id, 0)


_M = 1_000_000


def default_pricing() -> PricingSchedule:
    """Published list prices: every provider starts at $1 per 1,000 under 1M
    transactions/month, then drops into provider-specific tiers. ``ms-free``
    models the free instance (30,000 transactions/month included)."""
    d = Decimal
    base = Tier(1 * _M, d("1.00"))
    aws = ProviderTerms("aws", (base, Tier(10 * _M, d("0.80")), Tier(100 * _M, d("0.60")), Tier(None, d("0.40"))))
    ms = ProviderTerms("ms", (base, Tier(5 * _M, d("0.80")), Tier(100 * _M, d("0.60")), Tier(None, d("0.40"))))
    ms_free = ProviderTerms("ms-free", ms.tiers, free_allowance=30_000)
    nav = ProviderTerms("nav", (base, Tier(100 * _M, d("0.50")), Tier(None, d("0.30"))))
    return PricingSchedule(
        providers={t.provider_id: t for t in (aws, ms, ms_free, nav)},
        fallback=ProviderTerms("default", (Tier(None, d("1.00")),)),
    )


def load_pricing(path: str | Path) -> PricingSchedule:
    """Read a schedule from JSON: {provider_id: {tiers: [[upper|null, "price"]...],
    free_allowance, billing}}."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    providers = {}
    for pid, spec in data.items():
        tiers = tuple(
            Tier(ub if ub is None else int(ub), Decimal(str(price)))
            for ub, price in spec["tiers"]
        )
        providers[pid] = ProviderTerms(
            pid, tiers,
            free_allowance=int(spec.get("free_allowance", 0)),
            billing=spec.get("billing", "marginal"),
        )
    return PricingSchedule(providers=providers)
