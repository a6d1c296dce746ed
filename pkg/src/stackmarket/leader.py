"""Customer side: discounts, payments, task generation and utilities."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Sequence

from .model import Customer, CustomerId, MarketInstance, Money, Task, derive_task, to_money
from .partitions import blocks_from_choices, canonical_choices, set_partitions

VARIANTS = ("table", "exp_cap", "normalized_exp")
LEADER_CAP = 8


@dataclass(frozen=True)
class DiscountModel:
    """Group-buying discount factor as a function of per-service demand.

    ``exp_cap`` is the experimental curve 0.5·e^(-rate·(d-1)) + 0.4, which
    starts at 0.9 and never goes below 0.4. ``normalized_exp`` rescales it so
    that a lone buyer pays full price. ``table`` maps counts to exact factors.
    """

    variant: str
    rate: float = 0.0
    table: tuple[tuple[int, Fraction], ...] = ()

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown discount variant {self.variant!r}")
        if self.rate < 0:
            raise ValueError("discount rate must be non-negative")
        if self.variant == "table":
            table = tuple(sorted((int(d), to_money(f)) for d, f in dict(self.table).items()))
            if not table:
                raise ValueError("discount table is empty")
            for d, f in table:
                if d < 1 or not 0 < f <= 1:
                    raise ValueError(f"bad discount table entry {d}: {f}")
            for (_, f0), (_, f1) in zip(table, table[1:]):
                if not f1 < f0:
                    raise ValueError("discount table must be strictly decreasing")
            object.__setattr__(self, "table", table)
        elif self.variant == "normalized_exp" and self.rate == 0:
            raise ValueError("normalized_exp needs a positive rate to be strictly decreasing")

    @classmethod
    def from_table(cls, table: Mapping[int, object]) -> "DiscountModel":
        return cls("table", table=tuple(table.items()))

    @classmethod
    def exp_cap(cls, rate: float) -> "DiscountModel":
        return cls("exp_cap", rate=float(rate))

    @classmethod
    def normalized_exp(cls, rate: float) -> "DiscountModel":
        return cls("normalized_exp", rate=float(rate))

    def factor(self, d: int) -> Fraction:
        if d < 1:
            raise ValueError("demand count must be at least 1")
        if self.variant == "table":
            for count, f in self.table:
                if count == d:
                    return f
            raise ValueError(f"discount table has no factor for demand {d}")
        amplitude = 0.5 if self.variant == "exp_cap" else 0.6
        return to_money(amplitude * math.exp(-self.rate * (d - 1)) + 0.4)

    def to_dict(self) -> dict:
        if self.variant == "table":
            return {"variant": "table", "table": {str(d): str(f) for d, f in self.table}}
        return {"variant": self.variant, "rate": self.rate}

    @classmethod
    def from_dict(cls, data: Mapping) -> "DiscountModel":
        if data["variant"] == "table":
            return cls.from_table({int(d): Fraction(f) for d, f in data["table"].items()})
        return cls(data["variant"], rate=float(data["rate"]))


def discount(model: DiscountModel, d: int) -> Fraction:
    return model.factor(d)


def service_payment(prices: Sequence, d: int, model: DiscountModel) -> Money:
    """Pay^k_s: the discounted sum of what each contributing member offered for s."""
    prices = [to_money(p) for p in prices]
    if d != len(prices):
        raise ValueError(f"demand {d} does not match {len(prices)} contributing members")
    return model.factor(d) * sum(prices, Fraction(0))


def member_payment(x: Customer, k: Task, model: DiscountModel) -> Money:
    if x.id not in k.members:
        raise ValueError(f"customer {x.id} is not a member of the task")
    return sum((model.factor(k.demand[s]) * x.prices[s] for s in x.needs), Fraction(0))


def customer_utility(x: CustomerId, k: Task, allocated: bool, inst: MarketInstance) -> Money:
    """Cost a customer minimizes: its discounted payment, or the penalty if the task fails."""
    if x not in k.members:
        raise ValueError(f"customer {x} is not a member of the task")
    if not allocated:
        return inst.penalty_xi
    return member_payment(inst.customer(x), k, inst.discount)


@dataclass(frozen=True)
class LeaderProfile:
    choice: Mapping[CustomerId, frozenset] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "choice", {x: frozenset(a) for x, a in self.choice.items()})
        for x, a in self.choice.items():
            if x not in a:
                raise ValueError(f"customer {x} must belong to its own choice set")

    @classmethod
    def canonical(cls, partition: Iterable[Iterable]) -> "LeaderProfile":
        return cls(canonical_choices([frozenset(b) for b in partition]))

    def partition(self, order: Sequence | None = None) -> tuple[frozenset, ...]:
        return blocks_from_choices(self.choice, order if order is not None else sorted(self.choice))


def tasks_from_profile(spl: LeaderProfile, inst: MarketInstance) -> list[Task]:
    """Tasks induced by a leader profile: customers sharing a choice set form one task."""
    return [derive_task(block, inst) for block in spl.partition(inst.customer_ids)]


def jaccard_distance(a: frozenset, b: frozenset) -> float:
    union = len(a | b)
    if union == 0:
        return 0.0
    return 1.0 - len(a & b) / union


def _modal_set(members: Sequence[frozenset]) -> frozenset:
    counts: dict = {}
    for needs in members:
        for s in needs:
            counts[s] = counts.get(s, 0) + 1
    half = len(members) / 2
    modal = frozenset(s for s, c in counts.items() if c >= half)
    if not modal:
        top = max(counts.values())
        modal = frozenset(s for s, c in counts.items() if c == top)
    return modal


def cluster_tasks(customers: Sequence[Customer], n_tasks: int, seed=0, max_iters: int = 100) -> LeaderProfile:
    """Group customers into ``n_tasks`` tasks by Jaccard distance between need sets.

    Centroids start at ``n_tasks`` seeded-random customers. Each round assigns
    every customer to its nearest centroid (lowest index on ties), then moves
    each centroid to the modal need set of its members: services needed by at
    least half of the cluster. An emptied cluster is reseeded with the
    customer farthest from its own centroid.
    """
    n = len(customers)
    if not 1 <= n_tasks <= n:
        raise ValueError(f"n_tasks must be in [1, {n}], got {n_tasks}")
    needs = [c.needs for c in customers]
    rng = random.Random(seed)
    centroids = [needs[i] for i in rng.sample(range(n), n_tasks)]
    assign = [-1] * n

    for _ in range(max_iters):
        new_assign = []
        dist = []
        for a in needs:
            best, best_d = 0, jaccard_distance(a, centroids[0])
            for j in range(1, n_tasks):
                dj = jaccard_distance(a, centroids[j])
                if dj < best_d:
                    best, best_d = j, dj
            new_assign.append(best)
            dist.append(best_d)

        clusters: list[list[int]] = [[] for _ in range(n_tasks)]
        for i, j in enumerate(new_assign):
            clusters[j].append(i)
        new_centroids = [_modal_set([needs[i] for i in cl]) if cl else None for cl in clusters]

        empty = [j for j, cl in enumerate(clusters) if not cl]
        if empty:
            donors = iter(sorted(range(n), key=lambda i: (-dist[i], i)))
            for j in empty:
                i = next(d for d in donors if len(clusters[new_assign[d]]) > 1)
                old = new_assign[i]
                clusters[old].remove(i)
                clusters[j].append(i)
                new_assign[i] = j
                new_centroids[j] = needs[i]
            for j, cl in enumerate(clusters):
                if cl and j not in empty:
                    new_centroids[j] = _modal_set([needs[i] for i in cl])
                elif not cl:
                    new_centroids[j] = centroids[j]

        stable = new_assign == assign and new_centroids == centroids
        assign, centroids = new_assign, new_centroids
        if stable:
            break

    groups: dict[int, list] = {}
    for c, j in zip(customers, assign):
        groups.setdefault(j, []).append(c.id)
    return LeaderProfile.canonical(groups.values())


def leader_partitions(customers: Sequence, cap: int = LEADER_CAP) -> Iterator[LeaderProfile]:
    """One canonical leader profile per set partition of the customers."""
    ids = [c.id if isinstance(c, Customer) else c for c in customers]
    if len(ids) > cap:
        raise ValueError(f"{len(ids)} customers exceeds the enumeration cap {cap}")
    for partition in set_partitions(ids):
        yield LeaderProfile.canonical(partition)
