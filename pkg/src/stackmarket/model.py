"""Market domain types, exact money, feasibility rules and instance validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import TYPE_CHECKING, Hashable, Iterable, Mapping

if TYPE_CHECKING:
    from .leader import DiscountModel

ServiceId = str
CustomerId = str
CompanyId = str
AgentId = Hashable

Money = Fraction


def to_money(value) -> Money:
    """Convert ``value`` to an exact rational amount.

    Floats go through their shortest decimal repr, so ``0.9`` becomes ``9/10``
    rather than the binary expansion.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not money")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, (str, Decimal)):
        return Fraction(value)
    raise TypeError(f"cannot convert {type(value).__name__} to money")


class ValidationError(ValueError):
    """Raised when an instance, file or argument violates a model rule."""


@dataclass(frozen=True)
class ServiceCatalog:
    services: tuple[ServiceId, ...]

    def __post_init__(self):
        object.__setattr__(self, "services", tuple(self.services))
        if not self.services:
            raise ValidationError("service catalog is empty")
        if len(set(self.services)) != len(self.services):
            raise ValidationError("service ids in catalog are not unique")

    def __contains__(self, s) -> bool:
        return s in self.services

    def __len__(self) -> int:
        return len(self.services)

    def __iter__(self):
        return iter(self.services)


@dataclass(frozen=True)
class Customer:
    id: CustomerId
    needs: frozenset[ServiceId]
    prices: Mapping[ServiceId, Money]

    def __post_init__(self):
        object.__setattr__(self, "needs", frozenset(self.needs))
        object.__setattr__(self, "prices", {s: to_money(p) for s, p in self.prices.items()})
        if not self.needs:
            raise ValidationError(f"customer {self.id} needs no services")
        if set(self.prices) != set(self.needs):
            raise ValidationError(f"customer {self.id}: prices must be keyed exactly by needs")
        for s, p in self.prices.items():
            if p <= 0:
                raise ValidationError(f"customer {self.id}: price for {s} must be positive")

    def __hash__(self):
        return hash((self.id, self.needs))

    @property
    def total_price(self) -> Money:
        """Undiscounted payment for all needed services."""
        return sum(self.prices.values(), Fraction(0))


@dataclass(frozen=True)
class Company:
    id: CompanyId
    services: frozenset[ServiceId]
    costs: Mapping[ServiceId, Money]
    offers: Mapping[ServiceId, Money]
    ops_cost: Money = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "services", frozenset(self.services))
        object.__setattr__(self, "costs", {s: to_money(c) for s, c in self.costs.items()})
        object.__setattr__(self, "offers", {s: to_money(o) for s, o in self.offers.items()})
        object.__setattr__(self, "ops_cost", to_money(self.ops_cost))
        if not self.services:
            raise ValidationError(f"company {self.id} offers no services")
        if set(self.costs) != set(self.services) or set(self.offers) != set(self.services):
            raise ValidationError(f"company {self.id}: costs/offers must be keyed exactly by services")
        if self.ops_cost < 0:
            raise ValidationError(f"company {self.id}: negative operating cost")

    def __hash__(self):
        return hash((self.id, self.services))

    @property
    def service_cost(self) -> Money:
        return sum(self.costs.values(), Fraction(0))


@dataclass(frozen=True)
class Task:
    members: frozenset[CustomerId]
    required: frozenset[ServiceId]
    demand: Mapping[ServiceId, int]
    payments: Mapping[ServiceId, Money]

    @property
    def total_payment(self) -> Money:
        return sum(self.payments.values(), Fraction(0))

    def __hash__(self):
        return hash((self.members, self.required))


@dataclass(frozen=True)
class Team:
    partners: frozenset[CompanyId]
    pooled: frozenset[ServiceId]
    multiplicity: Mapping[ServiceId, int]

    def __hash__(self):
        return hash(self.partners)


@dataclass(frozen=True)
class Violation:
    rule: str
    witness: tuple

    def __str__(self):
        return f"{self.rule}: {', '.join(map(str, self.witness))}"


@dataclass(frozen=True, eq=False)
class MarketInstance:
    catalog: ServiceCatalog
    customers: tuple[Customer, ...]
    companies: tuple[Company, ...]
    lam: Money = Fraction(9, 10)
    penalty_xi: Money | None = None
    discount: "DiscountModel | None" = None
    _customer_index: dict = field(init=False, repr=False, compare=False)
    _company_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        from .leader import DiscountModel

        object.__setattr__(self, "customers", tuple(self.customers))
        object.__setattr__(self, "companies", tuple(self.companies))
        object.__setattr__(self, "lam", to_money(self.lam))
        if self.discount is None:
            object.__setattr__(self, "discount", DiscountModel.normalized_exp(0.1))
        if self.penalty_xi is None:
            top = max((c.total_price for c in self.customers), default=Fraction(1))
            object.__setattr__(self, "penalty_xi", 10 * top)
        else:
            object.__setattr__(self, "penalty_xi", to_money(self.penalty_xi))
        if not 0 < self.lam <= 1:
            raise ValidationError("lambda must lie in (0, 1]")
        object.__setattr__(self, "_customer_index", {c.id: c for c in self.customers})
        object.__setattr__(self, "_company_index", {y.id: y for y in self.companies})
        if len(self._customer_index) != len(self.customers):
            raise ValidationError("duplicate customer ids")
        if len(self._company_index) != len(self.companies):
            raise ValidationError("duplicate company ids")

    def customer(self, cid: CustomerId) -> Customer:
        try:
            return self._customer_index[cid]
        except KeyError:
            raise KeyError(f"unknown customer id {cid!r}") from None

    def company(self, yid: CompanyId) -> Company:
        try:
            return self._company_index[yid]
        except KeyError:
            raise KeyError(f"unknown company id {yid!r}") from None

    @property
    def customer_ids(self) -> list[CustomerId]:
        return [c.id for c in self.customers]

    @property
    def company_ids(self) -> list[CompanyId]:
        return [y.id for y in self.companies]

    def replace(self, **changes) -> "MarketInstance":
        values = dict(
            catalog=self.catalog,
            customers=self.customers,
            companies=self.companies,
            lam=self.lam,
            penalty_xi=self.penalty_xi,
            discount=self.discount,
        )
        values.update(changes)
        return MarketInstance(**values)


def validate_instance(inst: MarketInstance) -> list[Violation]:
    """Return every violated market assumption, each with a witness."""
    out: list[Violation] = []
    catalog = set(inst.catalog)

    for c in inst.customers:
        for s in sorted(c.needs - catalog):
            out.append(Violation("customer needs unknown service", (c.id, s)))
    for y in inst.companies:
        for s in sorted(y.services - catalog):
            out.append(Violation("company offers unknown service", (y.id, s)))
        for s in sorted(y.services):
            if y.costs[s] <= 0:
                out.append(Violation("non-positive cost", (y.id, s)))
            if y.offers[s] <= 0:
                out.append(Violation("non-positive offer", (y.id, s)))
            if y.offers[s] < y.costs[s]:
                out.append(Violation("offer below cost", (y.id, s)))

    covered = set().union(*(y.services for y in inst.companies)) if inst.companies else set()
    for s in inst.catalog:
        if s not in covered:
            out.append(Violation("service not covered by any company", (s,)))
    if len(catalog) > 1:
        for y in inst.companies:
            if catalog <= y.services:
                out.append(Violation("single company covers S", (y.id,)))

    cheapest: dict[ServiceId, Money] = {}
    for y in inst.companies:
        for s, o in y.offers.items():
            if s not in cheapest or o < cheapest[s]:
                cheapest[s] = o
    for c in inst.customers:
        for s in sorted(c.needs):
            if s in cheapest and c.prices[s] < cheapest[s]:
                out.append(Violation("price below cheapest offer", (c.id, s)))

    top = max((c.total_price for c in inst.customers), default=Fraction(0))
    if not inst.penalty_xi > top:
        out.append(Violation("penalty not above every undiscounted payment", (inst.penalty_xi, top)))
    return out


def derive_task(members: Iterable[CustomerId], inst: MarketInstance) -> Task:
    """Build the task a group of customers jointly submits, with discounted payments."""
    from . import leader

    members = frozenset(members)
    if not members:
        raise ValueError("a task needs at least one member")
    customers = [inst.customer(x) for x in sorted(members)]
    required = frozenset().union(*(c.needs for c in customers))
    demand = {s: sum(1 for c in customers if s in c.needs) for s in sorted(required)}
    payments = {
        s: leader.service_payment([c.prices[s] for c in customers if s in c.needs], demand[s], inst.discount)
        for s in demand
    }
    return Task(members=members, required=required, demand=demand, payments=payments)


def derive_team(partners: Iterable[CompanyId], inst: MarketInstance) -> Team:
    partners = frozenset(partners)
    if not partners:
        raise ValueError("a team needs at least one partner")
    companies = [inst.company(y) for y in sorted(partners)]
    pooled = frozenset().union(*(y.services for y in companies))
    multiplicity = {s: sum(1 for y in companies if s in y.services) for s in sorted(pooled)}
    return Team(partners=partners, pooled=pooled, multiplicity=multiplicity)


def check_feasible_partition(blocks: Iterable[Iterable[AgentId]], universe: Iterable[AgentId]) -> bool:
    """True iff ``blocks`` are non-empty, pairwise disjoint and cover ``universe`` exactly."""
    seen: set = set()
    for block in blocks:
        block = set(block)
        if not block or block & seen:
            return False
        seen |= block
    return seen == set(universe)
