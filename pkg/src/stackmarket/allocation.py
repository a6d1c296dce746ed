"""Minimum-offer task allocation and failed-customer accounting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .follower import TeamFormation
from .model import MarketInstance, Money, Task


@dataclass(frozen=True)
class AllocationResult:
    assignment: Mapping[int, int | None]
    failed_customers: int
    per_task_offer: Mapping[int, Money | float]

    @property
    def allocated(self) -> list[int]:
        return [t for t, m in self.assignment.items() if m is not None]


def team_price(k: Task, team, inst: MarketInstance, price: str = "offer") -> Money:
    """Sum over required services of the cheapest partner quote (offer or cost)."""
    total = Fraction(0)
    for s in k.required:
        quotes = []
        for y in team.partners:
            company = inst.company(y)
            if s in company.services:
                quotes.append(company.offers[s] if price == "offer" else company.costs[s])
        total += min(quotes)
    return total


def find_min_offer(k: Task, formation: TeamFormation, inst: MarketInstance, price: str = "offer",
                   ties: str = "first") -> tuple[Money | float, int | None]:
    """Cheapest eligible team for ``k``; (inf, None) when no team pools every required service.

    ``ties="last"`` replays the original scan, where a later team with an
    equal offer replaces the incumbent.
    """
    if price not in ("offer", "cost"):
        raise ValueError("price must be 'offer' or 'cost'")
    if ties not in ("first", "last"):
        raise ValueError("ties must be 'first' or 'last'")
    best: Money | float = math.inf
    winner = None
    for i, m in enumerate(formation.teams):
        if not k.required <= m.pooled:
            continue
        offer = team_price(k, m, inst, price)
        if offer < best or (ties == "last" and offer == best):
            best, winner = offer, i
    return best, winner


def allocate(tasks: Sequence[Task], formation: TeamFormation, inst: MarketInstance, price: str = "offer",
             ties: str = "first") -> AllocationResult:
    assignment, offers = {}, {}
    failed = 0
    for t, k in enumerate(tasks):
        offer, team = find_min_offer(k, formation, inst, price, ties)
        assignment[t] = team
        offers[t] = offer
        if team is None:
            failed += len(k.members)
    return AllocationResult(assignment=assignment, failed_customers=failed, per_task_offer=offers)


def realized_revenue(tasks: Sequence[Task], formation: TeamFormation, result: AllocationResult,
                     inst: MarketInstance, include_ops: bool = True) -> dict:
    """Per-company revenue once every allocated task's payment goes to its team."""
    income = [Fraction(0)] * len(formation)
    for t, m in result.assignment.items():
        if m is not None:
            income[m] += tasks[t].total_payment
    out = {}
    for i, team in enumerate(formation.teams):
        share = inst.lam * income[i] / len(team.partners)
        for y in team.partners:
            company = inst.company(y)
            out[y] = share - company.service_cost - (company.ops_cost if include_ops else 0)
    return out
